#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <openssl/evp.h>

#include "qtele/errors.hpp"
#include "qtele/pipeline.hpp"
#include "qtele/rng.hpp"

namespace qtele {

namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

// Reads fields of one JSON object and rejects keys nobody asked for.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  const json* find(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void number(const char* key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) fail(key, "a number");
      out = v->get<double>();
    }
  }

  template <class Int>
  void integer(const char* key, Int& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer()) fail(key, "an integer");
      if constexpr (std::is_unsigned_v<Int>) {
        if (v->is_number_unsigned()) {
          out = static_cast<Int>(v->get<std::uint64_t>());
        } else {
          if (v->get<std::int64_t>() < 0) fail(key, "a non-negative integer");
          out = static_cast<Int>(v->get<std::int64_t>());
        }
      } else {
        out = static_cast<Int>(v->get<std::int64_t>());
      }
    }
  }

  void boolean(const char* key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) fail(key, "a boolean");
      out = v->get<bool>();
    }
  }

  void string(const char* key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) fail(key, "a string");
      out = v->get<std::string>();
    }
  }

  template <class Enum, class Parse>
  void enumeration(const char* key, Enum& out, Parse parse) {
    std::string text;
    if (find(key) == nullptr) return;
    string(key, text);
    try {
      out = parse(text);
    } catch (const std::exception& e) {
      throw ConfigError(path_ + "." + key + ": " + e.what());
    }
  }

  std::string child_path(const char* key) const { return path_ + "." + key; }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) throw ConfigError(path_ + ": unknown key '" + item.key() + "'");
    }
  }

 private:
  [[noreturn]] void fail(const char* key, const char* what) const {
    throw ConfigError(path_ + "." + key + ": expected " + what);
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_noise(const json& j, const std::string& path, NoiseParams& n) {
  ObjectReader r(j, path);
  r.number("visibility", n.visibility);
  r.number("depolarization", n.depolarization);
  r.number("feedforward_applied_prob", n.feedforward_applied_prob);
  r.finish();
}

void read_clock(const json& j, const std::string& path, ClockModel& c) {
  ObjectReader r(j, path);
  r.integer("initial_offset_ps", c.initial_offset_ps);
  r.number("drift_bound_ps", c.drift_bound_ps);
  r.number("drift_epoch_s", c.drift_epoch_s);
  r.number("initial_drift_rate_ps_per_s", c.initial_drift_rate_ps_per_s);
  r.number("random_walk_sigma", c.random_walk_sigma);
  r.finish();
}

void read_loss(const json& j, const std::string& path, LossFluctuation& l) {
  ObjectReader r(j, path);
  r.enumeration("model", l.model, parse_loss_model);
  r.number("amplitude_db", l.amplitude_db);
  r.number("correlation_time_s", l.correlation_time_s);
  r.finish();
}

void read_sim(const json& j, const std::string& path, SimConfig& c) {
  ObjectReader r(j, path);
  r.number("pump_rep_rate_hz", c.pump_rep_rate_hz);
  r.number("pair_prob_epr", c.pair_prob_epr);
  r.number("pair_prob_hsp", c.pair_prob_hsp);
  r.number("double_pair_prob", c.double_pair_prob);
  r.number("detector_efficiency", c.detector_efficiency);
  r.number("quantum_link_loss_db", c.quantum_link_loss_db);
  if (const json* v = r.find("loss_fluctuation")) read_loss(*v, r.child_path("loss_fluctuation"), c.loss_fluctuation);
  r.number("classical_link_efficiency", c.classical_link_efficiency);
  r.number("dark_rate_intrinsic_hz", c.dark_rate_intrinsic_hz);
  r.number("background_rate_hz", c.background_rate_hz);
  r.number("jitter_sigma_ps", c.jitter_sigma_ps);
  r.number("fiber_delay_ns", c.fiber_delay_ns);
  r.number("propagation_delay_us", c.propagation_delay_us);
  r.number("coincidence_window_ns", c.coincidence_window_ns);
  r.boolean("feedforward_enabled", c.feedforward_enabled);
  r.number("eom_gate_width_ns", c.eom_gate_width_ns);
  if (const json* v = r.find("noise")) read_noise(*v, r.child_path("noise"), c.noise);
  if (const json* v = r.find("clock")) read_clock(*v, r.child_path("clock"), c.clock);
  r.finish();
}

void read_analysis(const json& j, const std::string& path, AnalysisConfig& a) {
  ObjectReader r(j, path);
  r.number("window_ns", a.window_ns);
  r.number("resync_interval_s", a.resync_interval_s);
  r.integer("sync_bin_ps", a.sync_bin_ps);
  r.integer("sync_range_ps", a.sync_range_ps);
  r.number("sync_threshold_sigma", a.sync_threshold_sigma);
  if (const json* v = r.find("bsm_labels")) {
    if (!v->is_array()) throw ConfigError(r.child_path("bsm_labels") + ": expected an array");
    a.bsm_labels.clear();
    for (const json& e : *v) {
      if (!e.is_string()) throw ConfigError(r.child_path("bsm_labels") + ": expected strings");
      try {
        a.bsm_labels.push_back(parse_bell_state(e.get<std::string>()));
      } catch (const std::exception& ex) {
        throw ConfigError(r.child_path("bsm_labels") + ": " + ex.what());
      }
    }
  }
  r.boolean("feedforward_gating", a.feedforward_gating);
  r.boolean("include_ungated_psi_plus", a.include_ungated_psi_plus);
  r.integer("mc_resamples", a.mc_resamples);
  r.boolean("project_cp", a.project_cp);
  r.integer("accidental_shifts", a.accidental_shifts);
  r.finish();
}

RunSpec read_run(const json& j, const std::string& path) {
  RunSpec spec;
  ObjectReader r(j, path);
  if (r.find("input") == nullptr) throw ConfigError(path + ": missing 'input'");
  r.enumeration("input", spec.input, parse_pol_label);
  const json* bases = r.find("bases");
  if (bases == nullptr || !bases->is_array()) throw ConfigError(path + ".bases: expected an array");
  for (const json& b : *bases) {
    if (!b.is_string()) throw ConfigError(path + ".bases: expected strings");
    try {
      spec.bases.push_back(parse_basis(b.get<std::string>()));
    } catch (const std::exception& e) {
      throw ConfigError(path + ".bases: " + e.what());
    }
  }
  r.number("duration_s", spec.duration_s);
  r.integer("repeats", spec.repeats);
  r.finish();
  return spec;
}

ojson noise_json(const NoiseParams& n) {
  ojson j;
  j["visibility"] = n.visibility;
  j["depolarization"] = n.depolarization;
  j["feedforward_applied_prob"] = n.feedforward_applied_prob;
  return j;
}

ojson clock_json(const ClockModel& c) {
  ojson j;
  j["initial_offset_ps"] = c.initial_offset_ps;
  j["drift_bound_ps"] = c.drift_bound_ps;
  j["drift_epoch_s"] = c.drift_epoch_s;
  j["initial_drift_rate_ps_per_s"] = c.initial_drift_rate_ps_per_s;
  j["random_walk_sigma"] = c.random_walk_sigma;
  return j;
}

ojson sim_json(const SimConfig& c) {
  ojson j;
  j["pump_rep_rate_hz"] = c.pump_rep_rate_hz;
  j["pair_prob_epr"] = c.pair_prob_epr;
  j["pair_prob_hsp"] = c.pair_prob_hsp;
  j["double_pair_prob"] = c.double_pair_prob;
  j["detector_efficiency"] = c.detector_efficiency;
  j["quantum_link_loss_db"] = c.quantum_link_loss_db;
  j["loss_fluctuation"] = {{"model", std::string(to_string(c.loss_fluctuation.model))},
                           {"amplitude_db", c.loss_fluctuation.amplitude_db},
                           {"correlation_time_s", c.loss_fluctuation.correlation_time_s}};
  j["classical_link_efficiency"] = c.classical_link_efficiency;
  j["dark_rate_intrinsic_hz"] = c.dark_rate_intrinsic_hz;
  j["background_rate_hz"] = c.background_rate_hz;
  j["jitter_sigma_ps"] = c.jitter_sigma_ps;
  j["fiber_delay_ns"] = c.fiber_delay_ns;
  j["propagation_delay_us"] = c.propagation_delay_us;
  j["coincidence_window_ns"] = c.coincidence_window_ns;
  j["feedforward_enabled"] = c.feedforward_enabled;
  j["eom_gate_width_ns"] = c.eom_gate_width_ns;
  j["noise"] = noise_json(c.noise);
  j["clock"] = clock_json(c.clock);
  return j;
}

ojson analysis_json(const AnalysisConfig& a) {
  ojson j;
  j["window_ns"] = a.window_ns;
  j["resync_interval_s"] = a.resync_interval_s;
  j["sync_bin_ps"] = a.sync_bin_ps;
  j["sync_range_ps"] = a.sync_range_ps;
  j["sync_threshold_sigma"] = a.sync_threshold_sigma;
  ojson labels = ojson::array();
  for (BellState b : a.bsm_labels) labels.push_back(std::string(to_string(b)));
  j["bsm_labels"] = labels;
  j["feedforward_gating"] = a.feedforward_gating;
  j["include_ungated_psi_plus"] = a.include_ungated_psi_plus;
  j["mc_resamples"] = a.mc_resamples;
  j["project_cp"] = a.project_cp;
  j["accidental_shifts"] = a.accidental_shifts;
  return j;
}

std::string to_hex(const unsigned char* data, unsigned int n) {
  std::ostringstream os;
  os << std::hex << std::setfill('0');
  for (unsigned int i = 0; i < n; ++i) os << std::setw(2) << static_cast<int>(data[i]);
  return os.str();
}

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) {
    if (ctx_ == nullptr || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1) {
      throw std::runtime_error("sha256: digest init failed");
    }
  }
  ~Sha256() { EVP_MD_CTX_free(ctx_); }
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(const void* data, std::size_t n) {
    if (EVP_DigestUpdate(ctx_, data, n) != 1) throw std::runtime_error("sha256: update failed");
  }
  std::string hex() {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int n = 0;
    if (EVP_DigestFinal_ex(ctx_, md, &n) != 1) throw std::runtime_error("sha256: final failed");
    return to_hex(md, n);
  }

 private:
  EVP_MD_CTX* ctx_;
};

}  // namespace

void Scenario::validate() const {
  if (name.empty()) throw ConfigError("scenario: name must be non-empty");
  if (schedule.empty()) throw ConfigError("scenario: schedule must be non-empty");
  SimConfig probe = sim;
  for (const RunSpec& r : schedule) {
    if (r.bases.empty()) throw ConfigError("schedule: every entry needs at least one basis");
    if (r.repeats < 1) throw ConfigError("schedule: repeats must be >= 1");
    probe.duration_s = r.duration_s;
    probe.validate();
    std::set<Basis> distinct(r.bases.begin(), r.bases.end());
    if (distinct.size() != r.bases.size()) throw ConfigError("schedule: repeated basis in one entry");
  }
  // Every scheduled input must be reconstructible: all three bases, or at
  // least its eigenbasis.
  for (PolLabel in : {PolLabel::H, PolLabel::V, PolLabel::P, PolLabel::M, PolLabel::R, PolLabel::L}) {
    std::set<Basis> covered;
    bool scheduled = false;
    for (const RunSpec& r : schedule) {
      if (r.input != in) continue;
      scheduled = true;
      covered.insert(r.bases.begin(), r.bases.end());
    }
    if (scheduled && covered.size() < 3 && !covered.count(eigenbasis_of(in))) {
      throw ConfigError("schedule: input " + std::string(to_string(in)) +
                        " needs all three bases or its eigenbasis");
    }
  }
  const AnalysisConfig& a = analysis;
  if (!(a.window_ns > 0.0)) throw ConfigError("analysis: window_ns must be > 0");
  if (a.resync_interval_s < 45.0 || a.resync_interval_s > 180.0) {
    throw ConfigError("analysis: resync_interval_s must lie in [45, 180]");
  }
  if (a.sync_bin_ps < 1 || a.sync_range_ps < a.sync_bin_ps) {
    throw ConfigError("analysis: need sync_bin_ps >= 1 and sync_range_ps >= sync_bin_ps");
  }
  if (!(a.sync_threshold_sigma > 0.0)) throw ConfigError("analysis: sync_threshold_sigma must be > 0");
  if (a.bsm_labels.empty()) throw ConfigError("analysis: bsm_labels must be non-empty");
  for (BellState b : a.bsm_labels) {
    if (!BsmOutcome::of(b).identified) {
      throw ConfigError("analysis: bsm_labels may only hold PsiMinus and PsiPlus");
    }
  }
  if (a.mc_resamples < 0) throw ConfigError("analysis: mc_resamples must be >= 0");
  if (a.accidental_shifts < 1) throw ConfigError("analysis: accidental_shifts must be >= 1");
}

Scenario scenario_from_json(const json& j) {
  Scenario s;
  ObjectReader r(j, "scenario");
  const json* version = r.find("schema_version");
  if (version == nullptr || !version->is_number_integer() ||
      version->get<std::int64_t>() != kScenarioSchemaVersion) {
    throw ConfigError("scenario: schema_version must be " + std::to_string(kScenarioSchemaVersion));
  }
  r.string("name", s.name);
  r.integer("seed", s.seed);
  r.string("output_dir", s.output_dir);
  if (const json* v = r.find("sim")) read_sim(*v, "scenario.sim", s.sim);
  r.boolean("write_truth", s.write_truth);
  if (const json* v = r.find("analysis")) read_analysis(*v, "scenario.analysis", s.analysis);
  const json* sched = r.find("schedule");
  if (sched == nullptr || !sched->is_array()) throw ConfigError("scenario.schedule: expected an array");
  for (std::size_t i = 0; i < sched->size(); ++i) {
    s.schedule.push_back(read_run((*sched)[i], "scenario.schedule[" + std::to_string(i) + "]"));
  }
  r.finish();
  s.validate();
  return s;
}

ojson scenario_to_json(const Scenario& s) {
  ojson j;
  j["schema_version"] = kScenarioSchemaVersion;
  j["name"] = s.name;
  j["seed"] = s.seed;
  j["output_dir"] = s.output_dir;
  j["sim"] = sim_json(s.sim);
  j["write_truth"] = s.write_truth;
  j["analysis"] = analysis_json(s.analysis);
  ojson sched = ojson::array();
  for (const RunSpec& r : s.schedule) {
    ojson e;
    e["input"] = std::string(to_string(r.input));
    ojson bases = ojson::array();
    for (Basis b : r.bases) bases.push_back(std::string(to_string(b)));
    e["bases"] = bases;
    e["duration_s"] = r.duration_s;
    e["repeats"] = r.repeats;
    sched.push_back(e);
  }
  j["schedule"] = sched;
  return j;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("scenario file " + path.string() + ": " + e.what());
  }
  return scenario_from_json(j);
}

std::string sha256_hex(std::string_view data) {
  Sha256 h;
  h.update(data.data(), data.size());
  return h.hex();
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  Sha256 h;
  std::vector<char> buf(1 << 20);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    h.update(buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  return h.hex();
}

std::string config_sha256(const Scenario& s) {
  ojson j = scenario_to_json(s);
  // Where results land does not change them.
  j.erase("output_dir");
  return sha256_hex(j.dump());
}

std::vector<RunPlan> plan_runs(const Scenario& s) {
  std::vector<RunPlan> out;
  for (const RunSpec& spec : s.schedule) {
    for (Basis b : spec.bases) {
      for (int rep = 0; rep < spec.repeats; ++rep) {
        RunPlan p;
        p.index = out.size();
        p.input = spec.input;
        p.basis = b;
        p.duration_s = spec.duration_s;
        p.seed = derive_seed(s.seed, StreamTag::Run, p.index);
        std::ostringstream id;
        id << std::setw(3) << std::setfill('0') << p.index << '-' << to_string(p.input) << '-'
           << to_string(b) << '-' << rep;
        p.id = id.str();
        out.push_back(p);
      }
    }
  }
  return out;
}

SimConfig sim_config_for(const Scenario& s, const RunPlan& run) {
  SimConfig c = s.sim;
  c.input_label = run.input;
  c.analysis_basis = run.basis;
  c.duration_s = run.duration_s;
  c.seed = run.seed;
  return c;
}

}  // namespace qtele
