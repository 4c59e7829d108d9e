#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "qtele/errors.hpp"
#include "qtele/timesync.hpp"

namespace qtele {

namespace {

std::int64_t diff(std::uint64_t x, std::uint64_t y) {
  return static_cast<std::int64_t>(x) - static_cast<std::int64_t>(y);
}

bool is_bsm_detector(Detector d) {
  return d == Detector::a || d == Detector::b || d == Detector::c || d == Detector::d;
}

}  // namespace

std::size_t CoincidenceEvent::multiplicity() const {
  switch (kind) {
    case CoincidenceKind::Twofold: return 2;
    case CoincidenceKind::Threefold: return 3;
    case CoincidenceKind::Fourfold: return 4;
  }
  return 0;
}

std::vector<CoincidenceEvent> find_coincidences(std::span<const TimeTag> a,
                                                std::span<const TimeTag> b,
                                                std::int64_t window_ps) {
  if (!is_time_ordered(a) || !is_time_ordered(b)) {
    throw InvalidInput("find_coincidences: streams must be time-ordered");
  }
  std::vector<CoincidenceEvent> out;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    const std::int64_t d = diff(b[j].time_ps, a[i].time_ps);
    if (d < -window_ps) {
      ++j;
    } else if (d > window_ps) {
      ++i;
    } else {
      CoincidenceEvent ev;
      ev.kind = CoincidenceKind::Twofold;
      ev.time_ps = a[i].time_ps;
      ev.channels[0] = a[i].channel;
      ev.channels[1] = b[j].channel;
      ev.members[0] = i;
      ev.members[1] = j;
      out.push_back(ev);
      ++i;
      ++j;
    }
  }
  return out;
}

ThreefoldResult build_threefolds(std::span<const TimeTag> alice, std::int64_t window_ps) {
  if (!is_time_ordered(alice)) {
    throw InvalidInput("build_threefolds: stream must be time-ordered");
  }
  ThreefoldResult result;
  std::vector<bool> used(alice.size(), false);
  std::vector<std::size_t> partners;

  for (std::size_t i = 0; i < alice.size(); ++i) {
    if (alice[i].channel != Detector::t) continue;
    const std::uint64_t t0 = alice[i].time_ps;

    partners.clear();
    std::size_t k = i;
    while (k > 0 && diff(t0, alice[k - 1].time_ps) <= window_ps) --k;
    for (; k < alice.size() && diff(alice[k].time_ps, t0) <= window_ps; ++k) {
      if (!used[k] && is_bsm_detector(alice[k].channel)) partners.push_back(k);
    }

    if (partners.size() > 2) {
      ++result.ambiguous;
      continue;
    }
    if (partners.size() != 2 || alice[partners[0]].channel == alice[partners[1]].channel) {
      continue;
    }
    CoincidenceEvent ev;
    ev.kind = CoincidenceKind::Threefold;
    ev.time_ps = t0;
    ev.channels[0] = Detector::t;
    ev.members[0] = i;
    // Channels of the pair in ascending detector order.
    auto [p, q] = std::minmax(partners[0], partners[1], [&](std::size_t x, std::size_t y) {
      return alice[x].channel < alice[y].channel;
    });
    ev.channels[1] = alice[p].channel;
    ev.channels[2] = alice[q].channel;
    ev.members[1] = p;
    ev.members[2] = q;
    used[i] = used[p] = used[q] = true;
    result.events.push_back(ev);
  }
  return result;
}

ClassifiedBsm classify_threefolds(std::span<const CoincidenceEvent> threefolds) {
  using D = Detector;
  ClassifiedBsm out;
  out.events.reserve(threefolds.size());
  for (const CoincidenceEvent& ev : threefolds) {
    if (ev.kind != CoincidenceKind::Threefold || ev.channels[0] != D::t) {
      ++out.discarded;
      continue;
    }
    std::array<D, 2> pair = {ev.channels[1], ev.channels[2]};
    if (pair[1] < pair[0]) std::swap(pair[0], pair[1]);

    std::optional<BellState> label;
    if ((pair[0] == D::a && pair[1] == D::d) || (pair[0] == D::b && pair[1] == D::c)) {
      label = BellState::PsiMinus;
    } else if ((pair[0] == D::a && pair[1] == D::b) || (pair[0] == D::c && pair[1] == D::d)) {
      label = BellState::PsiPlus;
    }
    if (!label) {
      ++out.discarded;
      continue;
    }
    CoincidenceEvent labeled = ev;
    labeled.bsm_label = label;
    out.events.push_back(labeled);
  }
  return out;
}

std::vector<TimeTag> gate_on_feedforward(std::span<const TimeTag> bob,
                                         std::int64_t fiber_delay_ps,
                                         std::int64_t gate_width_ps) {
  if (!is_time_ordered(bob)) {
    throw InvalidInput("gate_on_feedforward: stream must be time-ordered");
  }
  std::vector<std::uint64_t> gate_centres;
  for (const TimeTag& tag : bob) {
    if (tag.channel == Detector::ff) gate_centres.push_back(tag.time_ps + static_cast<std::uint64_t>(fiber_delay_ps));
  }
  std::sort(gate_centres.begin(), gate_centres.end());

  const std::int64_t half = gate_width_ps / 2;
  std::vector<TimeTag> out;
  std::size_t g = 0;
  for (const TimeTag& tag : bob) {
    if (tag.channel != Detector::e && tag.channel != Detector::f) continue;
    while (g < gate_centres.size() && diff(tag.time_ps, gate_centres[g]) > half) ++g;
    if (g < gate_centres.size() && std::llabs(diff(tag.time_ps, gate_centres[g])) <= half) {
      out.push_back(tag);
    }
  }
  return out;
}

std::vector<Fourfold> match_fourfolds(std::span<const CoincidenceEvent> bsm_events,
                                      std::span<const TimeTag> bob_corrected,
                                      std::int64_t window_ps) {
  std::vector<TimeTag> alice_side;
  alice_side.reserve(bsm_events.size());
  for (const CoincidenceEvent& ev : bsm_events) {
    alice_side.push_back({ev.time_ps, Station::Alice, Detector::t});
  }
  std::vector<TimeTag> photons;
  photons.reserve(bob_corrected.size());
  for (const TimeTag& tag : bob_corrected) {
    if (tag.channel == Detector::e || tag.channel == Detector::f) photons.push_back(tag);
  }

  std::vector<Fourfold> out;
  for (const CoincidenceEvent& pair : find_coincidences(alice_side, photons, window_ps)) {
    const CoincidenceEvent& bsm = bsm_events[pair.members[0]];
    if (!bsm.bsm_label) continue;
    const TimeTag& photon = photons[pair.members[1]];
    out.push_back({*bsm.bsm_label, photon.channel, bsm.time_ps, diff(photon.time_ps, bsm.time_ps)});
  }
  return out;
}

double estimate_accidentals(std::span<const CoincidenceEvent> bsm_events,
                            std::span<const TimeTag> bob_corrected,
                            std::int64_t window_ps, int n_shifts,
                            std::int64_t shift_step_ps) {
  if (n_shifts < 1 || shift_step_ps <= 2 * window_ps) {
    throw InvalidInput("estimate_accidentals: need n_shifts >= 1 and shift step > 2 * window");
  }
  std::vector<TimeTag> shifted(bob_corrected.begin(), bob_corrected.end());
  std::uint64_t total = 0;
  for (int k = 1; k <= n_shifts; ++k) {
    const auto d = static_cast<std::uint64_t>(shift_step_ps);
    for (std::size_t i = 0; i < shifted.size(); ++i) shifted[i].time_ps = bob_corrected[i].time_ps + d * static_cast<std::uint64_t>(k);
    total += match_fourfolds(bsm_events, shifted, window_ps).size();
  }
  return static_cast<double>(total) / static_cast<double>(n_shifts);
}

std::int64_t retention_window_ps(std::span<const std::int64_t> deltas_ps,
                                 std::size_t n_reference, double fraction) {
  const auto needed = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n_reference)));
  if (needed == 0) return 0;
  if (deltas_ps.size() < needed) return -1;
  std::vector<std::int64_t> mags;
  mags.reserve(deltas_ps.size());
  for (std::int64_t d : deltas_ps) mags.push_back(std::llabs(d));
  std::nth_element(mags.begin(), mags.begin() + static_cast<std::ptrdiff_t>(needed - 1), mags.end());
  return mags[needed - 1];
}

}  // namespace qtele
