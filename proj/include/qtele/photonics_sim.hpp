// Event-level Monte Carlo of the two-station teleportation experiment.
//
// Each pump pulse sits on an exact integer-picosecond grid. Per pulse the
// heralded single-photon (HSP) source and the entangled (EPR) source emit
// 0, 1 or 2 pairs independently. Pulses with at least one pair in each
// source can fire Alice's three-fold logic; photon 3 then crosses the lossy
// link and is analyzed by Bob, whose tags are written in his own clock.
//
// Alice's tag stream holds the detector tags of pulses that fired her
// three-fold logic (the recorded BSM events). Bob's stream holds every e/f
// click (signal, unheralded photon 3s, dark and background counts) and the
// received feed-forward pulses on channel ff.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "qtele/protocol.hpp"
#include "qtele/time_tag.hpp"
#include "qtele/timesync.hpp"

namespace qtele {

enum class LossModel { Constant, OrnsteinUhlenbeck };

LossModel parse_loss_model(std::string_view text);
std::string_view to_string(LossModel model);

struct LossFluctuation {
  LossModel model = LossModel::OrnsteinUhlenbeck;
  /// Half-width of the band around the mean loss, in dB.
  double amplitude_db = 5.45;
  double correlation_time_s = 60.0;
};

struct SimConfig {
  double pump_rep_rate_hz = 8e7;
  double pair_prob_epr = 1.75e-3;
  double pair_prob_hsp = 2.25e-3;
  double double_pair_prob = 4e-6;
  double detector_efficiency = 1.0;
  double quantum_link_loss_db = 33.5;
  LossFluctuation loss_fluctuation;
  double classical_link_efficiency = 0.213;
  double dark_rate_intrinsic_hz = 15.0;
  double background_rate_hz = 100.0;
  double jitter_sigma_ps = 425.0;
  double fiber_delay_ns = 500.0;
  double propagation_delay_us = 477.0;
  double coincidence_window_ns = 3.0;
  bool feedforward_enabled = false;
  double eom_gate_width_ns = 10.0;
  PolLabel input_label = PolLabel::H;
  Basis analysis_basis = Basis::HV;
  double duration_s = 1.0;
  std::uint64_t seed = 1;

  NoiseParams noise;
  ClockModel clock;

  /// Throws ConfigError on any out-of-range field.
  void validate() const;

  std::int64_t pulse_period_ps() const;
  std::int64_t fiber_delay_ps() const;
  std::int64_t propagation_delay_ps() const;
  /// Photon 3 latency from Alice's BSM to Bob's analyzer.
  std::int64_t latency_ps() const { return fiber_delay_ps() + propagation_delay_ps(); }
  std::int64_t window_ps() const;
  std::int64_t eom_gate_ps() const;
};

/// Common origin added to both stations' clocks so that every tag time is
/// positive regardless of jitter and clock offset.
inline constexpr std::int64_t kTimeOriginPs = 1'000'000'000;  // 1 ms

/// Link attenuation as a function of time, clipped to
/// [mean - amplitude, mean + amplitude]. The OU variant is a mean-reverting
/// Gaussian walk with stationary sigma = amplitude / 2.
class AttenuationProcess {
 public:
  AttenuationProcess(double mean_db, const LossFluctuation& fluctuation,
                     double duration_s, std::uint64_t seed);

  double loss_db(double t_s) const;
  double transmission(double t_s) const;
  double min_loss_db() const { return min_db_; }
  double sample_step_s() const { return step_s_; }

 private:
  double mean_db_;
  double min_db_;
  double max_db_;
  double step_s_ = 1.0;
  std::vector<double> samples_;
};

/// Convenience wrapper around AttenuationProcess.
double attenuation_process(const AttenuationProcess& process, double t_s);

enum class PhotonFate { Transmitted, Lost };

struct TruthRecord {
  std::uint64_t pulse_index = 0;
  std::optional<BsmOutcome> bsm_outcome;
  /// False for double-pair (spurious) events.
  bool genuine = true;
  PhotonFate photon3_fate = PhotonFate::Lost;
  std::optional<Detector> bob_channel;
  bool feedforward_received = false;
  bool correction_applied = false;
  double ideal_output_fidelity = 0.0;
};

struct SimResult {
  std::vector<TimeTag> alice_tags;
  std::vector<TimeTag> bob_tags;
  std::vector<TruthRecord> truth;
};

struct SimOptions {
  int threads = 1;
  bool keep_truth = true;
};

/// Runs the event simulation. Output is identical for any thread count.
SimResult run_sim(const SimConfig& config, const SimOptions& options = {});

/// Closed-form four-fold rate (identified BSM events with photon 3 detected)
/// at the mean link loss, excluding accidentals.
double expected_fourfold_rate(const SimConfig& config);

/// The clock trajectory run_sim uses for a config (for validation).
ClockTrajectory clock_trajectory_for(const SimConfig& config);
AttenuationProcess attenuation_for(const SimConfig& config);

void write_truth_jsonl(std::ostream& out, const std::vector<TruthRecord>& truth);

}  // namespace qtele
