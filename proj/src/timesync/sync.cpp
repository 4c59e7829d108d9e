#include <algorithm>
#include <cmath>
#include <string>

#include "qtele/errors.hpp"
#include "qtele/timesync.hpp"

namespace qtele {

namespace {

// Off-peak statistics exclude the maximum bin and this many bins either side.
constexpr std::int64_t kPeakGuardBins = 2;

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

std::vector<TimeTag> filter_channel(std::span<const TimeTag> tags, Detector channel,
                                    std::uint64_t lo, std::uint64_t hi) {
  std::vector<TimeTag> out;
  auto first = std::lower_bound(tags.begin(), tags.end(), lo,
                                [](const TimeTag& t, std::uint64_t v) { return t.time_ps < v; });
  for (auto it = first; it != tags.end() && it->time_ps < hi; ++it) {
    if (it->channel == channel) out.push_back(*it);
  }
  return out;
}

}  // namespace

SyncEstimate cross_correlate(std::span<const TimeTag> alice,
                             std::span<const TimeTag> bob,
                             const CrossCorrelationOptions& options) {
  if (alice.empty() || bob.empty()) {
    throw InvalidInput("cross_correlate: both streams must be non-empty");
  }
  if (!is_time_ordered(alice) || !is_time_ordered(bob)) {
    throw InvalidInput("cross_correlate: streams must be time-ordered");
  }
  if (options.bin_ps < 1 || options.search_range_ps < 0) {
    throw InvalidInput("cross_correlate: bin must be >= 1 ps and range >= 0");
  }

  const std::int64_t bin = options.bin_ps;
  const std::int64_t half_bins = (options.search_range_ps + bin - 1) / bin;
  const std::size_t n_bins = static_cast<std::size_t>(2 * half_bins + 1);
  std::vector<std::uint64_t> hist(n_bins, 0);

  // Bin k (0-based) is centred on center + (k - half_bins) * bin.
  const std::int64_t reach = options.search_range_ps;
  std::size_t lo = 0;
  for (const TimeTag& a : alice) {
    const auto ta = static_cast<std::int64_t>(a.time_ps);
    const std::int64_t window_lo = ta + options.center_ps - reach;
    while (lo < bob.size() && static_cast<std::int64_t>(bob[lo].time_ps) < window_lo) ++lo;
    for (std::size_t j = lo; j < bob.size(); ++j) {
      const std::int64_t rel =
          static_cast<std::int64_t>(bob[j].time_ps) - ta - options.center_ps;
      if (rel > reach) break;
      const std::int64_t k = floor_div(2 * rel + bin, 2 * bin) + half_bins;
      if (k >= 0 && k < static_cast<std::int64_t>(n_bins)) ++hist[static_cast<std::size_t>(k)];
    }
  }

  auto bin_offset = [&](std::size_t k) {
    return options.center_ps + (static_cast<std::int64_t>(k) - half_bins) * bin;
  };
  std::size_t peak = 0;
  for (std::size_t k = 1; k < n_bins; ++k) {
    if (hist[k] > hist[peak] ||
        (hist[k] == hist[peak] && std::llabs(bin_offset(k)) < std::llabs(bin_offset(peak)))) {
      peak = k;
    }
  }

  double sum = 0.0, sum2 = 0.0;
  std::size_t n_off = 0;
  for (std::size_t k = 0; k < n_bins; ++k) {
    if (std::llabs(static_cast<std::int64_t>(k) - static_cast<std::int64_t>(peak)) <= kPeakGuardBins) {
      continue;
    }
    const auto v = static_cast<double>(hist[k]);
    sum += v;
    sum2 += v * v;
    ++n_off;
  }
  const double mean = n_off > 0 ? sum / static_cast<double>(n_off) : 0.0;
  const double var = n_off > 1 ? std::max(0.0, (sum2 - sum * mean) / static_cast<double>(n_off - 1)) : 0.0;
  const auto peak_height = static_cast<double>(hist[peak]);

  double refined = static_cast<double>(bin_offset(peak));
  if (peak > 0 && peak + 1 < n_bins) {
    const auto ym = static_cast<double>(hist[peak - 1]);
    const auto yp = static_cast<double>(hist[peak + 1]);
    const double denom = ym - 2.0 * peak_height + yp;
    if (denom < 0.0) refined += 0.5 * (ym - yp) / denom * static_cast<double>(bin);
  }

  SyncEstimate est;
  est.offset_ps = static_cast<std::int64_t>(std::llround(refined));
  est.peak_counts = hist[peak];
  // Background floored at one count spread over all bins.
  est.peak_significance = peak_height / std::max(mean, 1.0 / static_cast<double>(n_bins));
  est.valid = peak_height > mean + options.threshold_sigma * std::max(std::sqrt(var), 1.0);
  return est;
}

// ---------------------------------------------------------------------------

OffsetTrack::OffsetTrack(std::int64_t constant_offset_ps)
    : times_{0.0}, offsets_{static_cast<double>(constant_offset_ps)} {}

OffsetTrack::OffsetTrack(std::vector<double> knot_times_ps, std::vector<double> offsets_ps)
    : times_(std::move(knot_times_ps)), offsets_(std::move(offsets_ps)) {
  if (times_.size() != offsets_.size() || times_.empty()) {
    throw InvalidInput("OffsetTrack: need matching, non-empty knot arrays");
  }
  if (!std::is_sorted(times_.begin(), times_.end())) {
    throw InvalidInput("OffsetTrack: knot times must be increasing");
  }
}

double OffsetTrack::offset_at(double alice_time_ps) const {
  if (times_.empty()) return 0.0;
  if (alice_time_ps <= times_.front()) return offsets_.front();
  if (alice_time_ps >= times_.back()) return offsets_.back();
  const auto it = std::upper_bound(times_.begin(), times_.end(), alice_time_ps);
  const auto k = static_cast<std::size_t>(it - times_.begin());
  const double t0 = times_[k - 1], t1 = times_[k];
  const double w = (alice_time_ps - t0) / (t1 - t0);
  return offsets_[k - 1] + w * (offsets_[k] - offsets_[k - 1]);
}

SyncTrackResult sync_track(std::span<const TimeTag> alice,
                           std::span<const TimeTag> bob,
                           const SyncOptions& options, const ClockModel& clock) {
  if (options.resync_interval_s < 45.0 || options.resync_interval_s > 180.0) {
    throw InvalidInput("sync_track: resync interval must lie in [45, 180] s");
  }
  if (!is_time_ordered(alice) || !is_time_ordered(bob)) {
    throw InvalidInput("sync_track: streams must be time-ordered");
  }

  SyncTrackResult result;
  if (alice.empty()) {
    result.track = OffsetTrack(clock.initial_offset_ps);
    return result;
  }

  const auto interval_ps = static_cast<std::uint64_t>(
      std::llround(options.resync_interval_s * static_cast<double>(kPsPerSecond)));
  const std::uint64_t t_begin = alice.front().time_ps;
  const std::uint64_t t_end = alice.back().time_ps + 1;
  const std::int64_t prior = clock.initial_offset_ps;
  const std::int64_t reach = options.xcorr.search_range_ps;

  std::vector<double> knot_t, knot_v;
  std::int64_t fallback = prior;
  int consecutive_failures = 0;

  for (std::uint64_t start = t_begin; start < t_end; start += interval_ps) {
    const std::uint64_t stop = std::min(start + interval_ps, t_end);
    SyncEstimate est;
    est.epoch_start_s = static_cast<double>(start - t_begin) / static_cast<double>(kPsPerSecond);

    const auto a_sel = filter_channel(alice, options.alice_channel, start, stop);
    const std::int64_t shift = options.latency_ps + prior;
    const auto b_lo = static_cast<std::uint64_t>(
        std::max<std::int64_t>(0, static_cast<std::int64_t>(start) + shift - reach));
    const auto b_hi = static_cast<std::uint64_t>(
        std::max<std::int64_t>(0, static_cast<std::int64_t>(stop) + shift + reach));
    const auto b_sel = filter_channel(bob, options.bob_channel, b_lo, b_hi);

    if (!a_sel.empty() && !b_sel.empty()) {
      CrossCorrelationOptions xo = options.xcorr;
      xo.center_ps = shift;
      const SyncEstimate raw = cross_correlate(a_sel, b_sel, xo);
      est.offset_ps = raw.offset_ps - options.latency_ps;
      est.peak_significance = raw.peak_significance;
      est.peak_counts = raw.peak_counts;
      est.valid = raw.valid;
    }

    if (est.valid) {
      consecutive_failures = 0;
      fallback = est.offset_ps;
      knot_t.push_back(0.5 * (static_cast<double>(start) + static_cast<double>(stop)));
      knot_v.push_back(static_cast<double>(est.offset_ps));
    } else {
      ++result.failed_epochs;
      est.offset_ps = fallback;
      if (++consecutive_failures > options.max_consecutive_failures) {
        throw SyncFailure("sync_track: " + std::to_string(consecutive_failures) +
                          " consecutive epochs without a significant correlation peak");
      }
    }
    result.epochs.push_back(est);
  }

  result.track = knot_t.empty() ? OffsetTrack(prior)
                                 : OffsetTrack(std::move(knot_t), std::move(knot_v));
  return result;
}

std::vector<TimeTag> correct_bob_tags(std::span<const TimeTag> bob,
                                      const OffsetTrack& track,
                                      std::int64_t latency_ps) {
  std::vector<TimeTag> out;
  out.reserve(bob.size());
  for (const TimeTag& tag : bob) {
    const double approx_alice = static_cast<double>(tag.time_ps) - static_cast<double>(latency_ps);
    const double off = track.offset_at(approx_alice - track.offset_at(approx_alice));
    const double corrected = approx_alice - off;
    TimeTag c = tag;
    c.time_ps = corrected <= 0.0 ? 0 : static_cast<std::uint64_t>(std::llround(corrected));
    out.push_back(c);
  }
  std::stable_sort(out.begin(), out.end(), tag_before);
  return out;
}

}  // namespace qtele
