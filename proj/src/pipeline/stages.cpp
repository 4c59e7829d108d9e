#include <algorithm>
#include <fstream>
#include <sstream>

#include "qtele/errors.hpp"
#include "qtele/pipeline.hpp"

namespace qtele {

namespace fs = std::filesystem;

namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

fs::path run_dir(const Scenario& s, const RunPlan& run) { return fs::path(s.output_dir) / "runs" / run.id; }

std::ofstream open_out(const fs::path& p) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  return out;
}

std::ifstream open_in(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string() + " (run the earlier stage first)");
  return in;
}

void write_json(const fs::path& p, const ojson& j) {
  auto out = open_out(p);
  out << j.dump(2) << '\n';
}

json read_json(const fs::path& p) {
  auto in = open_in(p);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw InvalidInput(p.string() + ": " + e.what());
  }
}

// The echo leaves out output_dir so a run directory can be moved or compared
// byte for byte with one produced elsewhere.
void write_scenario(const Scenario& s) {
  auto j = scenario_to_json(s);
  j.erase("output_dir");
  write_json(fs::path(s.output_dir) / "scenario.json", j);
}

void write_sync(const fs::path& p, const SyncTrackResult& r) {
  auto out = open_out(p);
  for (const SyncEstimate& e : r.epochs) {
    ojson j;
    j["type"] = "epoch";
    j["epoch_start_s"] = e.epoch_start_s;
    j["offset_ps"] = e.offset_ps;
    j["peak_significance"] = e.peak_significance;
    j["peak_counts"] = e.peak_counts;
    j["valid"] = e.valid;
    out << j.dump() << '\n';
  }
  ojson t;
  t["type"] = "track";
  t["knot_times_ps"] = r.track.knot_times_ps();
  t["knot_offsets_ps"] = r.track.knot_offsets_ps();
  out << t.dump() << '\n';
}

SyncTrackResult read_sync(const fs::path& p) {
  auto in = open_in(p);
  SyncTrackResult r;
  bool have_track = false;
  std::string line;
  try {
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const json j = json::parse(line);
      const std::string type = j.at("type").get<std::string>();
      if (type == "epoch") {
        SyncEstimate e;
        e.epoch_start_s = j.at("epoch_start_s").get<double>();
        e.offset_ps = j.at("offset_ps").get<std::int64_t>();
        e.peak_significance = j.at("peak_significance").get<double>();
        e.peak_counts = j.at("peak_counts").get<std::uint64_t>();
        e.valid = j.at("valid").get<bool>();
        if (!e.valid) ++r.failed_epochs;
        r.epochs.push_back(e);
      } else if (type == "track") {
        r.track = OffsetTrack(j.at("knot_times_ps").get<std::vector<double>>(),
                              j.at("knot_offsets_ps").get<std::vector<double>>());
        have_track = true;
      } else {
        throw InvalidInput(p.string() + ": unknown line type '" + type + "'");
      }
    }
  } catch (const json::exception& e) {
    throw InvalidInput(p.string() + ": " + e.what());
  }
  if (!have_track) throw InvalidInput(p.string() + ": missing offset track");
  return r;
}

void write_fourfolds(const fs::path& p, const std::vector<Fourfold>& ff) {
  auto out = open_out(p);
  for (const Fourfold& f : ff) {
    ojson j;
    j["bsm_label"] = std::string(to_string(f.bsm_label));
    j["bob_channel"] = std::string(to_string(f.bob_channel));
    j["time_ps"] = f.time_ps;
    j["delta_ps"] = f.delta_ps;
    out << j.dump() << '\n';
  }
}

std::vector<RunAnalysis> coincide_all(const Scenario& s, std::vector<CountRow>& counts) {
  std::vector<RunAnalysis> runs;
  for (const RunPlan& run : plan_runs(s)) {
    const fs::path dir = run_dir(s, run);
    const auto alice = read_ttag_file(dir / "alice.ttag");
    const auto bob = read_ttag_file(dir / "bob.ttag");
    const SyncTrackResult sync = read_sync(dir / "sync.jsonl");
    RunAnalysis ra = coincide_run(s, run, alice, bob, sync.track);
    ra.sync_epochs = sync.epochs;
    ra.sync_failed_epochs = sync.failed_epochs;
    write_fourfolds(dir / "fourfolds.jsonl", ra.fourfolds);
    write_json(dir / "run.json", run_to_json(ra));
    accumulate_counts(counts, ra);
    ra.fourfolds.shrink_to_fit();
    runs.push_back(std::move(ra));
  }
  auto out = open_out(fs::path(s.output_dir) / "counts.csv");
  write_count_table(out, counts);
  return runs;
}

bool all_converged(const std::vector<StateReport>& states) {
  return std::all_of(states.begin(), states.end(),
                     [](const StateReport& r) { return !r.tomo || r.tomo->converged; });
}

std::vector<StateReport> tomo_states(const Scenario& s) {
  auto in = open_in(fs::path(s.output_dir) / "counts.csv");
  const auto counts = read_count_table(in);
  auto states = reconstruct_states(s, counts);
  write_json(fs::path(s.output_dir) / "states.json", states_to_json(states));
  return states;
}

}  // namespace

void write_manifest(const Scenario& s) {
  const fs::path root(s.output_dir);
  std::vector<std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const std::string rel = fs::relative(e.path(), root).generic_string();
    if (rel != "manifest.json") files.push_back(rel);
  }
  std::sort(files.begin(), files.end());
  ojson j;
  j["seed"] = s.seed;
  j["config_sha256"] = config_sha256(s);
  j["version"] = kArtifactVersion;
  ojson digests = ojson::object();
  for (const std::string& f : files) digests[f] = sha256_file(root / f);
  j["files"] = digests;
  write_json(root / "manifest.json", j);
}

void stage_simulate(const Scenario& s, int threads) {
  s.validate();
  write_scenario(s);
  SimOptions so;
  so.threads = threads;
  so.keep_truth = s.write_truth;
  for (const RunPlan& run : plan_runs(s)) {
    const SimResult r = run_sim(sim_config_for(s, run), so);
    const fs::path dir = run_dir(s, run);
    fs::create_directories(dir);
    write_ttag_file(dir / "alice.ttag", r.alice_tags);
    write_ttag_file(dir / "bob.ttag", r.bob_tags);
    if (s.write_truth) {
      auto out = open_out(dir / "truth.jsonl");
      write_truth_jsonl(out, r.truth);
    }
  }
  write_manifest(s);
}

void stage_sync(const Scenario& s) {
  s.validate();
  write_scenario(s);
  for (const RunPlan& run : plan_runs(s)) {
    const fs::path dir = run_dir(s, run);
    const auto alice = read_ttag_file(dir / "alice.ttag");
    const auto bob = read_ttag_file(dir / "bob.ttag");
    write_sync(dir / "sync.jsonl", sync_run(s, run, alice, bob));
  }
  write_manifest(s);
}

void stage_coincide(const Scenario& s) {
  s.validate();
  write_scenario(s);
  std::vector<CountRow> counts;
  coincide_all(s, counts);
  write_manifest(s);
}

bool stage_tomo_state(const Scenario& s) {
  s.validate();
  write_scenario(s);
  const auto states = tomo_states(s);
  write_manifest(s);
  return all_converged(states);
}

void stage_tomo_process(const Scenario& s) {
  s.validate();
  write_scenario(s);
  const auto states = states_from_json(read_json(fs::path(s.output_dir) / "states.json"));
  const auto process = reconstruct_process(s, states);
  if (!process) throw InvalidInput("tomo-process: needs MLE states for all of H, V, P, L");
  write_json(fs::path(s.output_dir) / "process.json", process_to_json(*process));
  write_manifest(s);
}

bool stage_analyze(const Scenario& s) {
  s.validate();
  write_scenario(s);
  for (const RunPlan& run : plan_runs(s)) {
    const fs::path dir = run_dir(s, run);
    const auto alice = read_ttag_file(dir / "alice.ttag");
    const auto bob = read_ttag_file(dir / "bob.ttag");
    write_sync(dir / "sync.jsonl", sync_run(s, run, alice, bob));
  }
  std::vector<CountRow> counts;
  const auto runs = coincide_all(s, counts);
  const auto states = tomo_states(s);
  const auto process = reconstruct_process(s, states);
  if (process) write_json(fs::path(s.output_dir) / "process.json", process_to_json(*process));
  write_json(fs::path(s.output_dir) / "report.json", make_report(s, runs, states, process));
  write_manifest(s);
  return all_converged(states);
}

}  // namespace qtele
