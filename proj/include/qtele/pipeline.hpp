// Scenario files, the simulate -> sync -> coincide -> tomography chain, and
// the on-disk run layout used by the command-line tool.
//
// Output layout under Scenario::output_dir:
//   scenario.json                 resolved scenario (after overrides)
//   runs/<id>/alice.ttag          Alice tags
//   runs/<id>/bob.ttag            Bob tags (local clock)
//   runs/<id>/truth.jsonl         truth log (when sim.write_truth)
//   runs/<id>/sync.jsonl          one line per epoch, then the offset track
//   runs/<id>/fourfolds.jsonl     matched four-folds
//   runs/<id>/run.json            per-run coincidence statistics
//   counts.csv                    input,basis,bsm_label,n_first,n_second
//   states.json                   per-state reconstruction and fidelity
//   process.json                  chi (when H, V, P, L are all measured)
//   report.json                   summary with classical-limit flags
//   manifest.json                 seed, config digest, file digests

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "qtele/photonics_sim.hpp"
#include "qtele/timesync.hpp"
#include "qtele/tomography.hpp"

namespace qtele {

inline constexpr int kScenarioSchemaVersion = 1;
inline constexpr const char* kArtifactVersion = "0.1.0";

inline constexpr double kClassicalStateFidelity = 2.0 / 3.0;
inline constexpr double kClassicalProcessFidelity = 0.5;

struct RunSpec {
  PolLabel input = PolLabel::H;
  std::vector<Basis> bases;
  double duration_s = 1.0;
  /// Independent runs per basis; keeps per-run memory bounded.
  int repeats = 1;
};

struct AnalysisConfig {
  /// Cross-station (BSM event to Bob photon) match window, half-width.
  /// Alice's three-fold logic uses sim.coincidence_window_ns.
  double window_ns = 3.0;
  double resync_interval_s = 180.0;
  std::int64_t sync_bin_ps = 1000;
  std::int64_t sync_range_ps = 1'000'000;
  double sync_threshold_sigma = 5.0;
  std::vector<BellState> bsm_labels = {BellState::PsiMinus};
  /// Psi+ events only count with a Bob photon inside an EOM gate.
  bool feedforward_gating = true;
  /// Keep Psi+ events whose classical pulse was lost (uncorrected photons).
  bool include_ungated_psi_plus = false;
  int mc_resamples = 1000;
  bool project_cp = false;
  int accidental_shifts = 20;
};

struct Scenario {
  std::string name = "scenario";
  std::uint64_t seed = 1;
  std::string output_dir = "out";
  /// input_label, analysis_basis, duration_s and seed are set per run.
  SimConfig sim;
  bool write_truth = true;
  AnalysisConfig analysis;
  std::vector<RunSpec> schedule;

  /// Throws ConfigError.
  void validate() const;
};

/// Strict parse: unknown keys and schema mismatches throw ConfigError.
Scenario scenario_from_json(const nlohmann::json& j);
nlohmann::ordered_json scenario_to_json(const Scenario& s);
Scenario load_scenario(const std::filesystem::path& path);

std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);
/// Digest of the canonical JSON form of the scenario.
std::string config_sha256(const Scenario& s);

struct RunPlan {
  std::string id;
  std::size_t index = 0;
  PolLabel input = PolLabel::H;
  Basis basis = Basis::HV;
  double duration_s = 1.0;
  std::uint64_t seed = 0;
};

std::vector<RunPlan> plan_runs(const Scenario& s);
SimConfig sim_config_for(const Scenario& s, const RunPlan& run);

// ---------------------------------------------------------------------------
// Per-run analysis

struct RunAnalysis {
  RunPlan plan;
  std::uint64_t alice_tags = 0;
  std::uint64_t bob_tags = 0;
  std::vector<SyncEstimate> sync_epochs;
  int sync_failed_epochs = 0;
  std::uint64_t threefolds = 0;
  std::uint64_t ambiguous = 0;
  std::uint64_t discarded = 0;
  std::uint64_t psi_minus = 0;
  std::uint64_t psi_plus = 0;
  std::vector<Fourfold> fourfolds;  // only the selected BSM labels
  double accidentals = 0.0;
};

SyncTrackResult sync_run(const Scenario& s, const RunPlan& run,
                         std::span<const TimeTag> alice, std::span<const TimeTag> bob);

/// Three-folds, labels, optional feed-forward gating and four-fold matching.
RunAnalysis coincide_run(const Scenario& s, const RunPlan& run,
                         std::span<const TimeTag> alice, std::span<const TimeTag> bob,
                         const OffsetTrack& track);

struct CountRow {
  PolLabel input = PolLabel::H;
  Basis basis = Basis::HV;
  BellState bsm_label = BellState::PsiMinus;
  std::uint64_t n_first = 0;   // Bob detector e
  std::uint64_t n_second = 0;  // Bob detector f
};

/// Adds the run's four-folds to `table` (rows merged by key).
void accumulate_counts(std::vector<CountRow>& table, const RunAnalysis& run);
void write_count_table(std::ostream& out, std::span<const CountRow> table);
std::vector<CountRow> read_count_table(std::istream& in);

// ---------------------------------------------------------------------------
// Reconstruction and reporting

struct StateReport {
  PolLabel input = PolLabel::H;
  /// "mle" with all three bases, "eigenbasis" otherwise.
  std::string method;
  FidelityEstimate fidelity;
  std::uint64_t total_counts = 0;
  std::optional<TomoResult> tomo;
  bool above_classical = false;
};

struct ProcessReport {
  ProcessMatrix chi;
  double fidelity = 0.0;
  bool above_classical = false;
};

std::vector<StateReport> reconstruct_states(const Scenario& s, std::span<const CountRow> table);
std::optional<ProcessReport> reconstruct_process(const Scenario& s, std::span<const StateReport> states);

nlohmann::ordered_json states_to_json(std::span<const StateReport> states);
std::vector<StateReport> states_from_json(const nlohmann::json& j);
nlohmann::ordered_json process_to_json(const ProcessReport& p);
nlohmann::ordered_json run_to_json(const RunAnalysis& run);

nlohmann::ordered_json make_report(const Scenario& s, std::span<const RunAnalysis> runs,
                                   std::span<const StateReport> states,
                                   const std::optional<ProcessReport>& process);

struct PipelineResult {
  std::vector<RunAnalysis> runs;
  std::vector<CountRow> counts;
  std::vector<StateReport> states;
  std::optional<ProcessReport> process;
};

/// Whole chain without touching the file system. Run tags are dropped after
/// each run is analyzed.
PipelineResult run_pipeline(const Scenario& s, int threads = 1);

// ---------------------------------------------------------------------------
// On-disk stages (each refreshes manifest.json)

void stage_simulate(const Scenario& s, int threads);
void stage_sync(const Scenario& s);
void stage_coincide(const Scenario& s);
/// Returns false if any maximum-likelihood fit did not converge.
bool stage_tomo_state(const Scenario& s);
void stage_tomo_process(const Scenario& s);
/// sync, coincide, tomo-state, tomo-process and report.json.
bool stage_analyze(const Scenario& s);

void write_manifest(const Scenario& s);

/// Pinned calibrated scenarios for the two measurement stages.
Scenario reproduction_stage1();
Scenario reproduction_stage2();

/// Runs both pinned scenarios under `out_dir` and writes stage1.csv,
/// stage2.csv and chi.csv. Returns false on MLE non-convergence.
bool reproduce(const std::filesystem::path& out_dir, int threads);

}  // namespace qtele
