// qtele: command-line driver for the teleportation simulator and analysis.
//
// Every flag can also be set through the environment with the QTELE_ prefix
// (QTELE_CONFIG, QTELE_SEED, QTELE_OUT, QTELE_THREADS, QTELE_WINDOW_NS,
// QTELE_RESYNC_S); a flag on the command line wins over the environment.
//
// Exit codes: 0 success, 1 I/O or other error, 2 configuration error,
// 3 clock-synchronization failure, 4 tomography did not converge.

#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "qtele/errors.hpp"
#include "qtele/pipeline.hpp"

namespace {

enum ExitCode { kOk = 0, kIoError = 1, kConfigError = 2, kSyncFailure = 3, kNotConverged = 4 };

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  int threads = 1;
  std::optional<double> window_ns;
  std::optional<double> resync_s;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool need_config) {
  auto* c = cmd->add_option("--config", f.config, "Scenario JSON file")->envname("QTELE_CONFIG");
  if (need_config) c->required();
  cmd->add_option("--seed", f.seed, "Override the scenario seed")->envname("QTELE_SEED");
  cmd->add_option("--out", f.out, "Override the output directory")->envname("QTELE_OUT");
  cmd->add_option("--threads", f.threads, "Simulation threads (output does not depend on it)")
      ->envname("QTELE_THREADS")
      ->check(CLI::Range(1, 256));
  cmd->add_option("--window-ns", f.window_ns, "Cross-station coincidence window half-width")
      ->envname("QTELE_WINDOW_NS");
  cmd->add_option("--resync-s", f.resync_s, "Clock resynchronization interval")->envname("QTELE_RESYNC_S");
}

qtele::Scenario load(const CommonFlags& f) {
  qtele::Scenario s = qtele::load_scenario(f.config);
  if (f.seed) s.seed = *f.seed;
  if (f.out) s.output_dir = *f.out;
  if (f.window_ns) s.analysis.window_ns = *f.window_ns;
  if (f.resync_s) s.analysis.resync_interval_s = *f.resync_s;
  s.validate();
  return s;
}

int run_standalone_tomo(const std::string& counts_path, const std::string& ideal_label,
                        int resamples, std::uint64_t seed, const std::optional<std::string>& out) {
  std::ifstream in(counts_path);
  if (!in) throw std::runtime_error("cannot read " + counts_path);
  const auto counts = qtele::read_counts_csv(in);
  const qtele::TomoResult t = qtele::mle_reconstruct(counts);
  nlohmann::ordered_json j;
  j["rho"] = qtele::matrix_to_json(t.rho.matrix());
  j["log_likelihood"] = t.log_likelihood;
  j["iterations"] = t.iterations;
  j["converged"] = t.converged;
  if (!ideal_label.empty()) {
    const auto est = qtele::monte_carlo_sigma(counts, qtele::standard_ket(qtele::parse_pol_label(ideal_label)),
                                              resamples, seed);
    j["ideal"] = ideal_label;
    j["fidelity"] = est.value;
    j["sigma"] = est.sigma;
    j["n_resamples"] = est.n_resamples;
  }
  if (out) {
    std::ofstream o(*out);
    if (!o) throw std::runtime_error("cannot write " + *out);
    o << j.dump(2) << '\n';
  } else {
    std::cout << j.dump(2) << '\n';
  }
  return t.converged ? kOk : kNotConverged;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-station quantum teleportation simulator and analysis chain"};
  app.require_subcommand(1);

  CommonFlags f;
  auto* simulate = app.add_subcommand("simulate", "Generate time-tag files and truth logs");
  auto* sync = app.add_subcommand("sync", "Recover the clock offset track per run");
  auto* coincide = app.add_subcommand("coincide", "Three-folds, four-folds and count table");
  auto* tomo_state = app.add_subcommand("tomo-state", "Maximum-likelihood states and fidelities");
  auto* tomo_process = app.add_subcommand("tomo-process", "Process matrix from the H, V, P, L states");
  auto* analyze = app.add_subcommand("analyze", "sync + coincide + tomography + report");
  auto* reproduce = app.add_subcommand("reproduce", "Run the pinned calibrated stage 1 and stage 2 scenarios");

  for (auto* cmd : {simulate, sync, coincide, tomo_process, analyze}) add_common(cmd, f, true);
  add_common(tomo_state, f, false);
  add_common(reproduce, f, false);

  std::string counts_csv, ideal;
  int resamples = 1000;
  tomo_state->add_option("--counts", counts_csv, "Standalone mode: CSV with basis,n_first,n_second");
  tomo_state->add_option("--ideal", ideal, "Ideal state label for the fidelity (standalone mode)");
  tomo_state->add_option("--resamples", resamples, "Monte Carlo resamples (standalone mode)")
      ->check(CLI::NonNegativeNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    if (reproduce->parsed()) {
      const std::string out = f.out.value_or("reproduction");
      const bool ok = qtele::reproduce(out, f.threads);
      std::cout << "wrote " << out << "/stage1.csv, stage2.csv, chi.csv\n";
      return ok ? kOk : kNotConverged;
    }
    if (tomo_state->parsed() && !counts_csv.empty()) {
      return run_standalone_tomo(counts_csv, ideal, resamples, f.seed.value_or(0), f.out);
    }
    if (tomo_state->parsed() && f.config.empty()) {
      throw qtele::ConfigError("tomo-state needs --config or --counts");
    }

    const qtele::Scenario s = load(f);
    if (simulate->parsed()) {
      qtele::stage_simulate(s, f.threads);
    } else if (sync->parsed()) {
      qtele::stage_sync(s);
    } else if (coincide->parsed()) {
      qtele::stage_coincide(s);
    } else if (tomo_state->parsed()) {
      if (!qtele::stage_tomo_state(s)) return kNotConverged;
    } else if (tomo_process->parsed()) {
      qtele::stage_tomo_process(s);
    } else if (analyze->parsed()) {
      if (!qtele::stage_analyze(s)) return kNotConverged;
    }
    return kOk;
  } catch (const qtele::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const qtele::SyncFailure& e) {
    std::cerr << "sync failure: " << e.what() << '\n';
    return kSyncFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIoError;
  }
}
