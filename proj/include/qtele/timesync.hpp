// Clock models, entanglement-assisted offset recovery, and windowed
// coincidence identification between the two stations.

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "qtele/time_tag.hpp"

namespace qtele {

inline constexpr std::int64_t kPsPerSecond = 1'000'000'000'000;

// ---------------------------------------------------------------------------
// Clock model

/// GPS-disciplined clock of Bob relative to Alice.
///
/// The offset's rate of change performs a random walk reflected at
/// +-drift_bound_ps / drift_epoch_s, so the offset moves by at most
/// drift_bound_ps over any drift_epoch_s window.
struct ClockModel {
  std::int64_t initial_offset_ps = 0;
  double drift_bound_ps = 5000.0;
  double drift_epoch_s = 990.0;
  double initial_drift_rate_ps_per_s = 0.0;
  /// Diffusion of the drift rate, in (ps/s) per sqrt(s).
  double random_walk_sigma = 0.2;

  double max_rate_ps_per_s() const { return drift_bound_ps / drift_epoch_s; }
  void validate() const;
};

/// One realization of a ClockModel, sampled on a 1 s grid and linearly
/// interpolated in between.
class ClockTrajectory {
 public:
  ClockTrajectory(const ClockModel& model, double duration_s, std::uint64_t seed);

  /// Bob clock minus true time at true time `t_s` (seconds from run start).
  double offset_ps(double t_s) const;
  double duration_s() const { return static_cast<double>(offsets_.size() - 1); }

 private:
  std::vector<double> offsets_;
};

// ---------------------------------------------------------------------------
// Cross-correlation

struct CrossCorrelationOptions {
  std::int64_t bin_ps = 1000;
  std::int64_t search_range_ps = 1'000'000;
  /// Expected value of t_bob - t_alice (latency plus clock prior).
  std::int64_t center_ps = 0;
  /// Peak must exceed mean + threshold_sigma * max(stddev, 1) of off-peak bins.
  double threshold_sigma = 5.0;
};

struct SyncEstimate {
  double epoch_start_s = 0.0;
  /// Location of the correlation peak of t_bob - t_alice (sync_track reports
  /// it with the link latency removed, i.e. the pure clock offset).
  std::int64_t offset_ps = 0;
  double peak_significance = 0.0;
  std::uint64_t peak_counts = 0;
  bool valid = false;
};

/// Histogram of t_bob - t_alice over [center - range, center + range] with
/// parabolic refinement of the maximum. `valid == false` is the sync-failure
/// signal.
SyncEstimate cross_correlate(std::span<const TimeTag> alice,
                             std::span<const TimeTag> bob,
                             const CrossCorrelationOptions& options);

// ---------------------------------------------------------------------------
// Sync tracking

struct SyncOptions {
  double resync_interval_s = 180.0;
  CrossCorrelationOptions xcorr;
  Detector alice_channel = Detector::a;
  Detector bob_channel = Detector::e;
  /// Fiber plus free-space delay of photon 3.
  std::int64_t latency_ps = 0;
  int max_consecutive_failures = 3;
};

/// Clock offset as a function of Alice time, piecewise linear between epoch
/// midpoints and constant beyond the first and last.
class OffsetTrack {
 public:
  OffsetTrack() = default;
  explicit OffsetTrack(std::int64_t constant_offset_ps);
  OffsetTrack(std::vector<double> knot_times_ps, std::vector<double> offsets_ps);

  double offset_at(double alice_time_ps) const;
  const std::vector<double>& knot_times_ps() const { return times_; }
  const std::vector<double>& knot_offsets_ps() const { return offsets_; }

 private:
  std::vector<double> times_;
  std::vector<double> offsets_;
};

struct SyncTrackResult {
  std::vector<SyncEstimate> epochs;
  OffsetTrack track;
  int failed_epochs = 0;
};

/// Epoch-wise offset recovery. Throws SyncFailure after more than
/// `max_consecutive_failures` failed epochs in a row.
SyncTrackResult sync_track(std::span<const TimeTag> alice,
                           std::span<const TimeTag> bob,
                           const SyncOptions& options, const ClockModel& clock);

/// Bob tags moved onto Alice's time axis: t - latency - offset(t).
std::vector<TimeTag> correct_bob_tags(std::span<const TimeTag> bob,
                                      const OffsetTrack& track,
                                      std::int64_t latency_ps);

// ---------------------------------------------------------------------------
// Coincidences

enum class CoincidenceKind { Twofold, Threefold, Fourfold };

struct CoincidenceEvent {
  CoincidenceKind kind = CoincidenceKind::Twofold;
  /// Time of the first member (the trigger for three- and fourfolds).
  std::uint64_t time_ps = 0;
  std::array<Detector, 4> channels{};
  /// Indices of member tags in their source streams.
  std::array<std::size_t, 4> members{};
  std::optional<BellState> bsm_label;

  std::size_t multiplicity() const;
};

/// Greedy earliest-match pairing of two time-ordered streams; a pair
/// matches iff |t_a - t_b| <= window_ps. Each tag is used at most once.
std::vector<CoincidenceEvent> find_coincidences(std::span<const TimeTag> a,
                                                std::span<const TimeTag> b,
                                                std::int64_t window_ps);

struct ThreefoldResult {
  std::vector<CoincidenceEvent> events;
  /// Trigger tags with more than two BSM tags in the window.
  std::uint64_t ambiguous = 0;
};

/// Groups Alice tags into trigger-plus-two three-folds on distinct channels.
ThreefoldResult build_threefolds(std::span<const TimeTag> alice,
                                 std::int64_t window_ps);

struct ClassifiedBsm {
  std::vector<CoincidenceEvent> events;  // bsm_label set
  std::uint64_t discarded = 0;
};

/// Labels three-folds by the Psi-/Psi+ detector patterns and drops the rest.
ClassifiedBsm classify_threefolds(std::span<const CoincidenceEvent> threefolds);

/// Bob's local logic: keeps e/f tags that fall within the EOM gate opened by
/// a preceding ff tag (gate centred on ff + fiber_delay).
std::vector<TimeTag> gate_on_feedforward(std::span<const TimeTag> bob,
                                         std::int64_t fiber_delay_ps,
                                         std::int64_t gate_width_ps);

struct Fourfold {
  BellState bsm_label = BellState::PsiMinus;
  Detector bob_channel = Detector::e;
  std::uint64_t time_ps = 0;
  std::int64_t delta_ps = 0;  // bob - alice after correction
};

/// Matches labeled BSM events with offset-corrected e/f tags.
std::vector<Fourfold> match_fourfolds(std::span<const CoincidenceEvent> bsm_events,
                                      std::span<const TimeTag> bob_corrected,
                                      std::int64_t window_ps);

/// Mean number of matches when Bob's tags are displaced by k * shift_step_ps
/// for k = 1..n_shifts: the accidental (uncorrelated) part of
/// match_fourfolds at this window.
double estimate_accidentals(std::span<const CoincidenceEvent> bsm_events,
                            std::span<const TimeTag> bob_corrected,
                            std::int64_t window_ps, int n_shifts,
                            std::int64_t shift_step_ps);

/// Smallest half-width w such that at least `fraction * n_reference` of the
/// deltas satisfy |delta| <= w; -1 if there are too few deltas.
std::int64_t retention_window_ps(std::span<const std::int64_t> deltas_ps,
                                 std::size_t n_reference, double fraction);

}  // namespace qtele
