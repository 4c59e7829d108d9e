#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <set>
#include <tuple>
#include <ostream>
#include <sstream>

#include "qtele/errors.hpp"
#include "qtele/pipeline.hpp"
#include "qtele/rng.hpp"

namespace qtele {

namespace {

using ojson = nlohmann::ordered_json;

bool selected(const Scenario& s, BellState b) {
  return std::find(s.analysis.bsm_labels.begin(), s.analysis.bsm_labels.end(), b) !=
         s.analysis.bsm_labels.end();
}

std::int64_t window_ps(const Scenario& s) {
  return static_cast<std::int64_t>(std::llround(s.analysis.window_ns * 1e3));
}

std::set<Basis> scheduled_bases(const Scenario& s, PolLabel input) {
  std::set<Basis> out;
  for (const RunSpec& r : s.schedule) {
    if (r.input == input) out.insert(r.bases.begin(), r.bases.end());
  }
  return out;
}

std::vector<PolLabel> scheduled_inputs(const Scenario& s) {
  std::vector<PolLabel> out;
  for (const RunSpec& r : s.schedule) {
    if (std::find(out.begin(), out.end(), r.input) == out.end()) out.push_back(r.input);
  }
  return out;
}

// The input is the first ket of its eigenbasis for H, P, R.
bool is_first_of_eigenbasis(PolLabel l) {
  return l == PolLabel::H || l == PolLabel::P || l == PolLabel::R;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

}  // namespace

SyncTrackResult sync_run(const Scenario& s, const RunPlan& run,
                         std::span<const TimeTag> alice, std::span<const TimeTag> bob) {
  const SimConfig cfg = sim_config_for(s, run);
  SyncOptions opts;
  opts.resync_interval_s = s.analysis.resync_interval_s;
  opts.xcorr.bin_ps = s.analysis.sync_bin_ps;
  opts.xcorr.search_range_ps = s.analysis.sync_range_ps;
  opts.xcorr.threshold_sigma = s.analysis.sync_threshold_sigma;
  opts.latency_ps = cfg.latency_ps();
  return sync_track(alice, bob, opts, cfg.clock);
}

RunAnalysis coincide_run(const Scenario& s, const RunPlan& run,
                         std::span<const TimeTag> alice, std::span<const TimeTag> bob,
                         const OffsetTrack& track) {
  const SimConfig cfg = sim_config_for(s, run);
  RunAnalysis ra;
  ra.plan = run;
  ra.alice_tags = alice.size();
  ra.bob_tags = bob.size();

  const ThreefoldResult triples = build_threefolds(alice, cfg.window_ps());
  ra.threefolds = triples.events.size();
  ra.ambiguous = triples.ambiguous;
  const ClassifiedBsm labeled = classify_threefolds(triples.events);
  ra.discarded = labeled.discarded;

  std::vector<CoincidenceEvent> minus, plus;
  for (const CoincidenceEvent& ev : labeled.events) {
    (*ev.bsm_label == BellState::PsiMinus ? minus : plus).push_back(ev);
  }
  ra.psi_minus = minus.size();
  ra.psi_plus = plus.size();

  const std::int64_t window = window_ps(s);
  const std::int64_t shift_step = std::max<std::int64_t>(100'000, 4 * window);
  const std::vector<TimeTag> corrected = correct_bob_tags(bob, track, cfg.latency_ps());

  if (selected(s, BellState::PsiMinus)) {
    const auto ff = match_fourfolds(minus, corrected, window);
    ra.fourfolds.insert(ra.fourfolds.end(), ff.begin(), ff.end());
    ra.accidentals += estimate_accidentals(minus, corrected, window, s.analysis.accidental_shifts, shift_step);
  }
  if (selected(s, BellState::PsiPlus)) {
    std::vector<TimeTag> bob_plus;
    if (s.analysis.feedforward_gating && !s.analysis.include_ungated_psi_plus) {
      const auto gated = gate_on_feedforward(bob, cfg.fiber_delay_ps(), cfg.eom_gate_ps());
      bob_plus = correct_bob_tags(gated, track, cfg.latency_ps());
    } else {
      bob_plus = corrected;
    }
    const auto ff = match_fourfolds(plus, bob_plus, window);
    ra.fourfolds.insert(ra.fourfolds.end(), ff.begin(), ff.end());
    ra.accidentals += estimate_accidentals(plus, bob_plus, window, s.analysis.accidental_shifts, shift_step);
  }
  std::stable_sort(ra.fourfolds.begin(), ra.fourfolds.end(),
                   [](const Fourfold& a, const Fourfold& b) { return a.time_ps < b.time_ps; });
  return ra;
}

void accumulate_counts(std::vector<CountRow>& table, const RunAnalysis& run) {
  for (const Fourfold& f : run.fourfolds) {
    auto it = std::find_if(table.begin(), table.end(), [&](const CountRow& r) {
      return r.input == run.plan.input && r.basis == run.plan.basis && r.bsm_label == f.bsm_label;
    });
    if (it == table.end()) {
      table.push_back({run.plan.input, run.plan.basis, f.bsm_label, 0, 0});
      it = table.end() - 1;
    }
    (f.bob_channel == Detector::e ? it->n_first : it->n_second) += 1;
  }
  std::sort(table.begin(), table.end(), [](const CountRow& a, const CountRow& b) {
    return std::tuple(a.input, a.basis, a.bsm_label) < std::tuple(b.input, b.basis, b.bsm_label);
  });
}

void write_count_table(std::ostream& out, std::span<const CountRow> table) {
  out << "input,basis,bsm_label,n_first,n_second\n";
  for (const CountRow& r : table) {
    out << to_string(r.input) << ',' << to_string(r.basis) << ',' << to_string(r.bsm_label) << ','
        << r.n_first << ',' << r.n_second << '\n';
  }
}

std::vector<CountRow> read_count_table(std::istream& in) {
  std::vector<CountRow> out;
  std::string line;
  if (!std::getline(in, line) || trim(line) != "input,basis,bsm_label,n_first,n_second") {
    throw InvalidInput("count table: expected header 'input,basis,bsm_label,n_first,n_second'");
  }
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) f.push_back(trim(field));
    if (f.size() != 5) throw InvalidInput("count table line " + std::to_string(line_no) + ": expected 5 fields");
    for (int k : {3, 4}) {
      if (f[k].empty() || f[k].find_first_not_of("0123456789") != std::string::npos) {
        throw InvalidInput("count table line " + std::to_string(line_no) + ": bad count");
      }
    }
    const BellState label = parse_bell_state(f[2]);
    if (label != BellState::PsiMinus && label != BellState::PsiPlus) {
      throw InvalidInput("count table line " + std::to_string(line_no) + ": only Psi labels are identifiable");
    }
    out.push_back({parse_pol_label(f[0]), parse_basis(f[1]), label, std::stoull(f[3]), std::stoull(f[4])});
  }
  return out;
}

std::vector<StateReport> reconstruct_states(const Scenario& s, std::span<const CountRow> table) {
  std::vector<StateReport> out;
  for (PolLabel input : scheduled_inputs(s)) {
    std::vector<CountRecord> counts;
    for (Basis b : {Basis::HV, Basis::PM, Basis::RL}) {
      CountRecord rec{b, 0, 0};
      for (const CountRow& r : table) {
        if (r.input == input && r.basis == b && selected(s, r.bsm_label)) {
          rec.n_first += r.n_first;
          rec.n_second += r.n_second;
        }
      }
      counts.push_back(rec);
    }
    StateReport rep;
    rep.input = input;
    for (const CountRecord& c : counts) rep.total_counts += c.total();
    if (rep.total_counts == 0) {
      throw InvalidInput("no four-folds for input " + std::string(to_string(input)));
    }
    const std::uint64_t mc_seed = derive_seed(s.seed, StreamTag::MonteCarlo, static_cast<std::uint64_t>(input));
    const Ket ideal = standard_ket(input);

    if (scheduled_bases(s, input).size() == 3) {
      rep.method = "mle";
      rep.tomo = mle_reconstruct(counts);
      rep.fidelity = monte_carlo_sigma(counts, ideal, s.analysis.mc_resamples, mc_seed);
    } else {
      rep.method = "eigenbasis";
      const CountRecord& c = counts[static_cast<std::size_t>(eigenbasis_of(input))];
      const bool first = is_first_of_eigenbasis(input);
      rep.fidelity = eigenbasis_fidelity(first ? c.n_first : c.n_second, first ? c.n_second : c.n_first,
                                         s.analysis.mc_resamples, mc_seed);
    }
    rep.above_classical = rep.fidelity.value > kClassicalStateFidelity;
    out.push_back(std::move(rep));
  }
  return out;
}

std::optional<ProcessReport> reconstruct_process(const Scenario& s, std::span<const StateReport> states) {
  std::vector<StatePair> pairs;
  for (PolLabel in : {PolLabel::H, PolLabel::V, PolLabel::P, PolLabel::L}) {
    auto it = std::find_if(states.begin(), states.end(),
                           [&](const StateReport& r) { return r.input == in && r.tomo.has_value(); });
    if (it == states.end()) return std::nullopt;
    pairs.push_back({standard_ket(in), it->tomo->rho});
  }
  ProcessOptions opts;
  opts.project_cp = s.analysis.project_cp;
  ProcessReport rep;
  rep.chi = process_from_states(pairs, opts);
  rep.fidelity = process_fidelity(rep.chi);
  rep.above_classical = rep.fidelity > kClassicalProcessFidelity;
  return rep;
}

ojson states_to_json(std::span<const StateReport> states) {
  ojson arr = ojson::array();
  for (const StateReport& r : states) {
    ojson j;
    j["input"] = std::string(to_string(r.input));
    j["method"] = r.method;
    j["fidelity"] = r.fidelity.value;
    j["sigma"] = r.fidelity.sigma;
    j["n_resamples"] = r.fidelity.n_resamples;
    j["total_counts"] = r.total_counts;
    j["above_classical"] = r.above_classical;
    if (r.tomo) {
      j["rho"] = matrix_to_json(r.tomo->rho.matrix());
      j["log_likelihood"] = r.tomo->log_likelihood;
      j["iterations"] = r.tomo->iterations;
      j["converged"] = r.tomo->converged;
    } else {
      j["rho"] = nullptr;
    }
    arr.push_back(j);
  }
  return arr;
}

std::vector<StateReport> states_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw InvalidInput("states json: expected an array");
  std::vector<StateReport> out;
  try {
    for (const auto& e : j) {
      StateReport r;
      r.input = parse_pol_label(e.at("input").get<std::string>());
      r.method = e.at("method").get<std::string>();
      r.fidelity.value = e.at("fidelity").get<double>();
      r.fidelity.sigma = e.at("sigma").get<double>();
      r.fidelity.n_resamples = e.at("n_resamples").get<int>();
      r.total_counts = e.at("total_counts").get<std::uint64_t>();
      r.above_classical = e.at("above_classical").get<bool>();
      if (!e.at("rho").is_null()) {
        TomoResult t;
        t.rho = DensityMatrix(matrix_from_json(e.at("rho")));
        t.log_likelihood = e.at("log_likelihood").get<double>();
        t.iterations = e.at("iterations").get<int>();
        t.converged = e.at("converged").get<bool>();
        r.tomo = t;
      }
      out.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw InvalidInput(std::string("states json: ") + ex.what());
  }
  return out;
}

ojson process_to_json(const ProcessReport& p) {
  ojson j;
  j["chi"] = matrix_to_json(p.chi.chi);
  j["f_process"] = p.fidelity;
  j["above_classical"] = p.above_classical;
  return j;
}

ojson run_to_json(const RunAnalysis& run) {
  ojson j;
  j["id"] = run.plan.id;
  j["input"] = std::string(to_string(run.plan.input));
  j["basis"] = std::string(to_string(run.plan.basis));
  j["duration_s"] = run.plan.duration_s;
  j["seed"] = run.plan.seed;
  j["alice_tags"] = run.alice_tags;
  j["bob_tags"] = run.bob_tags;
  j["sync_epochs"] = run.sync_epochs.size();
  j["sync_failed_epochs"] = run.sync_failed_epochs;
  j["threefolds"] = run.threefolds;
  j["ambiguous"] = run.ambiguous;
  j["discarded"] = run.discarded;
  j["psi_minus"] = run.psi_minus;
  j["psi_plus"] = run.psi_plus;
  j["fourfolds"] = run.fourfolds.size();
  j["accidentals_estimate"] = run.accidentals;
  return j;
}

ojson make_report(const Scenario& s, std::span<const RunAnalysis> runs,
                  std::span<const StateReport> states, const std::optional<ProcessReport>& process) {
  ojson j;
  j["name"] = s.name;
  j["seed"] = s.seed;
  j["config_sha256"] = config_sha256(s);
  j["version"] = kArtifactVersion;
  j["classical_limits"] = {{"state_fidelity", kClassicalStateFidelity},
                           {"process_fidelity", kClassicalProcessFidelity}};

  std::uint64_t n_four = 0;
  double acc = 0.0;
  ojson run_arr = ojson::array();
  for (const RunAnalysis& r : runs) {
    n_four += r.fourfolds.size();
    acc += r.accidentals;
    run_arr.push_back(run_to_json(r));
  }
  j["runs"] = run_arr;
  ojson totals;
  totals["fourfolds"] = n_four;
  totals["accidentals_estimate"] = acc;
  if (acc > 0.0) {
    totals["signal_to_accidental"] = (static_cast<double>(n_four) - acc) / acc;
  } else {
    totals["signal_to_accidental"] = nullptr;
  }
  j["totals"] = totals;
  j["states"] = states_to_json(states);

  if (!states.empty()) {
    double sum = 0.0, var = 0.0;
    bool all_above = true;
    for (const StateReport& r : states) {
      sum += r.fidelity.value;
      var += r.fidelity.sigma * r.fidelity.sigma;
      all_above = all_above && r.above_classical;
    }
    const auto n = static_cast<double>(states.size());
    j["average_fidelity"] = {{"value", sum / n},
                             {"sigma", std::sqrt(var) / n},
                             {"above_classical", sum / n > kClassicalStateFidelity},
                             {"all_states_above_classical", all_above}};
  }
  j["process"] = process ? process_to_json(*process) : ojson(nullptr);
  return j;
}

PipelineResult run_pipeline(const Scenario& s, int threads) {
  s.validate();
  PipelineResult res;
  SimOptions so;
  so.threads = threads;
  so.keep_truth = false;
  for (const RunPlan& run : plan_runs(s)) {
    RunAnalysis ra;
    {
      const SimResult sim = run_sim(sim_config_for(s, run), so);
      const SyncTrackResult sync = sync_run(s, run, sim.alice_tags, sim.bob_tags);
      ra = coincide_run(s, run, sim.alice_tags, sim.bob_tags, sync.track);
      ra.sync_epochs = sync.epochs;
      ra.sync_failed_epochs = sync.failed_epochs;
    }
    accumulate_counts(res.counts, ra);
    res.runs.push_back(std::move(ra));
  }
  res.states = reconstruct_states(s, res.counts);
  res.process = reconstruct_process(s, res.states);
  return res;
}

}  // namespace qtele
