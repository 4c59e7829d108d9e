#include "qtele/photonics_sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <ostream>
#include <thread>

#include "json.hpp"

#include "qtele/errors.hpp"
#include "qtele/rng.hpp"

namespace qtele {

namespace {

// Pulses per independently seeded block (about 0.21 s at 80 MHz). Fixed so
// that the output does not depend on the thread count.
constexpr std::uint64_t kBlockPulses = 1ULL << 24;

bool in_unit(double x) { return x >= 0.0 && x <= 1.0; }

std::int64_t ns_to_ps(double ns) { return static_cast<std::int64_t>(std::llround(ns * 1e3)); }

// Photon-3 states needed by the event loop, computed once per run.
struct StateTable {
  struct Entry {
    double p_first = 0.5;    // probability of the first analyzer outcome
    double fidelity = 0.5;   // overlap with the input state
  };
  std::array<Entry, 4> conditioned{};  // indexed by BellState
  Entry psi_plus_corrected;
  Entry mixed;

  StateTable(const SimConfig& cfg) {
    const InputState input = InputState::from_label(cfg.input_label);
    const Ket ideal = input.ket();
    auto entry = [&](const DensityMatrix& rho) {
      return Entry{first_outcome_probability(rho, cfg.analysis_basis), fidelity_pure(rho, ideal)};
    };
    for (BellState b : kAllBellStates) {
      conditioned[static_cast<std::size_t>(b)] = entry(conditioned_state(input, b, cfg.noise));
    }
    const DensityMatrix psi_plus = conditioned_state(input, BellState::PsiPlus, cfg.noise);
    psi_plus_corrected = entry(apply(sigma_z(), psi_plus));
    mixed = entry(DensityMatrix::maximally_mixed(2));
  }
};

struct BlockOutput {
  std::vector<TimeTag> alice;
  std::vector<TimeTag> bob;
  std::vector<TruthRecord> truth;
};

class EventGenerator {
 public:
  EventGenerator(const SimConfig& cfg, const SimOptions& opts, const StateTable& states,
                 const AttenuationProcess& loss, const ClockTrajectory& clock)
      : cfg_(cfg), opts_(opts), states_(states), loss_(loss), clock_(clock),
        period_(cfg.pulse_period_ps()),
        fiber_(cfg.fiber_delay_ps()),
        prop_(cfg.propagation_delay_ps()),
        gate_half_(cfg.eom_gate_ps() / 2) {}

  BlockOutput run_block(std::uint64_t block, std::uint64_t first_pulse, std::uint64_t end_pulse) const {
    BlockOutput out;
    Rng rng = make_rng(cfg_.seed, StreamTag::SimBlock, block);
    heralded_events(rng, first_pulse, end_pulse, out);
    unheralded_photons(rng, first_pulse, end_pulse, out);
    detector_noise(rng, first_pulse, end_pulse, out);
    std::sort(out.alice.begin(), out.alice.end(), tag_before);
    std::sort(out.bob.begin(), out.bob.end(), tag_before);
    return out;
  }

 private:
  std::int64_t jitter(Rng& rng) const {
    if (cfg_.jitter_sigma_ps <= 0.0) return 0;
    std::normal_distribution<double> g(0.0, cfg_.jitter_sigma_ps);
    return static_cast<std::int64_t>(std::llround(g(rng)));
  }

  static double seconds(std::int64_t true_ps) {
    return static_cast<double>(true_ps) / static_cast<double>(kPsPerSecond);
  }

  TimeTag alice_tag(std::int64_t true_ps, Detector ch) const {
    return {static_cast<std::uint64_t>(kTimeOriginPs + true_ps), Station::Alice, ch};
  }

  TimeTag bob_tag(std::int64_t true_ps, Detector ch) const {
    const double local = static_cast<double>(kTimeOriginPs + true_ps) + clock_.offset_ps(seconds(true_ps));
    return {static_cast<std::uint64_t>(std::max<long long>(0, std::llround(local))), Station::Bob, ch};
  }

  void heralded_events(Rng& rng, std::uint64_t first, std::uint64_t end, BlockOutput& out) const {
    const double p = cfg_.pair_prob_hsp, pe = cfg_.pair_prob_epr, p2 = cfg_.double_pair_prob;
    const double q = (p + p2) * (pe + p2);
    if (q <= 0.0) return;

    std::geometric_distribution<std::uint64_t> skip(q);
    std::bernoulli_distribution hsp_double(p2 / (p + p2));
    std::bernoulli_distribution epr_double(p2 / (pe + p2));
    const double eta = cfg_.detector_efficiency;
    std::bernoulli_distribution alice_detects(eta * eta * eta);
    std::bernoulli_distribution coin(0.5);
    std::bernoulli_distribution ff_arrives(cfg_.classical_link_efficiency);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    for (std::uint64_t pulse = first + skip(rng); pulse < end; pulse += 1 + skip(rng)) {
      const bool genuine = !hsp_double(rng) & !epr_double(rng);
      if (!alice_detects(rng)) continue;

      const BsmOutcome outcome = sample_bsm(rng);
      const std::int64_t t_pulse = static_cast<std::int64_t>(pulse) * period_;

      DetectorTriple triple{};
      if (outcome.identified) {
        triple = detector_pattern(outcome)[coin(rng) ? 1 : 0];
      } else {
        // Same-polarization clicks in different ports fire the three-fold
        // logic without matching a Psi pattern; bunched photons do not.
        if (!coin(rng)) continue;
        triple = coin(rng) ? DetectorTriple{Detector::t, Detector::a, Detector::c}
                           : DetectorTriple{Detector::t, Detector::b, Detector::d};
      }
      for (Detector ch : triple) out.alice.push_back(alice_tag(t_pulse + jitter(rng), ch));

      TruthRecord truth;
      truth.pulse_index = pulse;
      truth.bsm_outcome = outcome;
      truth.genuine = genuine;

      std::int64_t ff_true = 0;
      if (cfg_.feedforward_enabled && outcome.bell == BellState::PsiPlus && ff_arrives(rng)) {
        ff_true = t_pulse + prop_ + jitter(rng);
        truth.feedforward_received = true;
        out.bob.push_back(bob_tag(ff_true, Detector::ff));
      }

      const StateTable::Entry* state = genuine
          ? &states_.conditioned[static_cast<std::size_t>(outcome.bell)]
          : &states_.mixed;

      const double survive = loss_.transmission(seconds(t_pulse)) * eta;
      if (unit(rng) < survive) {
        const std::int64_t arrival = t_pulse + fiber_ + prop_ + jitter(rng);
        if (truth.feedforward_received && std::llabs(arrival - (ff_true + fiber_)) <= gate_half_) {
          truth.correction_applied = true;
          if (genuine) state = &states_.psi_plus_corrected;
        }
        const Detector ch = unit(rng) < state->p_first ? Detector::e : Detector::f;
        out.bob.push_back(bob_tag(arrival, ch));
        truth.photon3_fate = PhotonFate::Transmitted;
        truth.bob_channel = ch;
      }
      truth.ideal_output_fidelity = state->fidelity;
      if (opts_.keep_truth) out.truth.push_back(truth);
    }
  }

  // Photon 3s of EPR pairs whose partners did not fire Alice's logic. Their
  // polarization is the maximally mixed marginal of the pair.
  void unheralded_photons(Rng& rng, std::uint64_t first, std::uint64_t end, BlockOutput& out) const {
    const double t_max = std::pow(10.0, -loss_.min_loss_db() / 10.0);
    const double rate = (cfg_.pair_prob_epr + cfg_.double_pair_prob) * t_max * cfg_.detector_efficiency;
    if (rate <= 0.0) return;
    std::geometric_distribution<std::uint64_t> skip(std::min(rate, 1.0));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::bernoulli_distribution coin(0.5);
    for (std::uint64_t pulse = first + skip(rng); pulse < end; pulse += 1 + skip(rng)) {
      const std::int64_t t_pulse = static_cast<std::int64_t>(pulse) * period_;
      if (unit(rng) * t_max >= loss_.transmission(seconds(t_pulse))) continue;
      const Detector ch = coin(rng) ? Detector::e : Detector::f;
      out.bob.push_back(bob_tag(t_pulse + fiber_ + prop_ + jitter(rng), ch));
    }
  }

  void detector_noise(Rng& rng, std::uint64_t first, std::uint64_t end, BlockOutput& out) const {
    const double rate = cfg_.dark_rate_intrinsic_hz + cfg_.background_rate_hz;
    if (rate <= 0.0) return;
    const std::int64_t lo = static_cast<std::int64_t>(first) * period_ + fiber_ + prop_;
    const std::int64_t hi = static_cast<std::int64_t>(end) * period_ + fiber_ + prop_;
    const double span_s = seconds(hi - lo);
    std::uniform_int_distribution<std::int64_t> when(lo, hi - 1);
    for (Detector ch : {Detector::e, Detector::f}) {
      std::poisson_distribution<std::uint64_t> count(rate * span_s);
      const std::uint64_t n = count(rng);
      for (std::uint64_t k = 0; k < n; ++k) out.bob.push_back(bob_tag(when(rng), ch));
    }
  }

  const SimConfig& cfg_;
  const SimOptions& opts_;
  const StateTable& states_;
  const AttenuationProcess& loss_;
  const ClockTrajectory& clock_;
  std::int64_t period_;
  std::int64_t fiber_;
  std::int64_t prop_;
  std::int64_t gate_half_;
};

}  // namespace

void SimConfig::validate() const {
  if (!(pump_rep_rate_hz > 0.0)) throw ConfigError("pump_rep_rate must be > 0");
  if (!in_unit(pair_prob_epr) || !in_unit(pair_prob_hsp) || !in_unit(double_pair_prob)) {
    throw ConfigError("pair probabilities must lie in [0, 1]");
  }
  if (pair_prob_epr + double_pair_prob > 1.0 || pair_prob_hsp + double_pair_prob > 1.0) {
    throw ConfigError("pair probabilities of a source sum above 1");
  }
  if (!in_unit(detector_efficiency)) throw ConfigError("detector_efficiency must lie in [0, 1]");
  if (!in_unit(classical_link_efficiency)) {
    throw ConfigError("classical_link_efficiency must lie in [0, 1]");
  }
  const double band = loss_fluctuation.model == LossModel::Constant ? 0.0 : loss_fluctuation.amplitude_db;
  if (loss_fluctuation.amplitude_db < 0.0 || quantum_link_loss_db - band < 0.0) {
    throw ConfigError("loss band must stay at or above 0 dB");
  }
  if (dark_rate_intrinsic_hz < 0.0 || background_rate_hz < 0.0) {
    throw ConfigError("dark and background rates must be >= 0");
  }
  if (jitter_sigma_ps < 0.0) throw ConfigError("jitter_sigma_ps must be >= 0");
  if (!(fiber_delay_ns > 0.0) || !(propagation_delay_us > 0.0)) {
    throw ConfigError("delays must be > 0");
  }
  if (!(coincidence_window_ns > 0.0) || !(eom_gate_width_ns > 0.0)) {
    throw ConfigError("windows must be > 0");
  }
  if (!(duration_s > 0.0)) throw ConfigError("duration_s must be > 0");
  if (pulse_period_ps() < 1) throw ConfigError("pump rate too high for 1 ps resolution");
  try {
    noise.validate();
  } catch (const InvalidInput& e) {
    throw ConfigError(e.what());
  }
  clock.validate();
  if (std::llabs(clock.initial_offset_ps) + clock.drift_bound_ps * (duration_s / clock.drift_epoch_s + 1.0) >=
      static_cast<double>(kTimeOriginPs)) {
    throw ConfigError("clock offset can exceed the time origin");
  }
}

std::int64_t SimConfig::pulse_period_ps() const {
  return static_cast<std::int64_t>(std::llround(1e12 / pump_rep_rate_hz));
}
std::int64_t SimConfig::fiber_delay_ps() const { return ns_to_ps(fiber_delay_ns); }
std::int64_t SimConfig::propagation_delay_ps() const { return ns_to_ps(propagation_delay_us * 1e3); }
std::int64_t SimConfig::window_ps() const { return ns_to_ps(coincidence_window_ns); }
std::int64_t SimConfig::eom_gate_ps() const { return ns_to_ps(eom_gate_width_ns); }

ClockTrajectory clock_trajectory_for(const SimConfig& config) {
  // Extra second covers photon latency past the last pulse.
  return ClockTrajectory(config.clock, config.duration_s + 1.0,
                         derive_seed(config.seed, StreamTag::Clock));
}

AttenuationProcess attenuation_for(const SimConfig& config) {
  return AttenuationProcess(config.quantum_link_loss_db, config.loss_fluctuation,
                            config.duration_s + 1.0, derive_seed(config.seed, StreamTag::Attenuation));
}

SimResult run_sim(const SimConfig& config, const SimOptions& options) {
  config.validate();
  const StateTable states(config);
  const AttenuationProcess loss = attenuation_for(config);
  const ClockTrajectory clock = clock_trajectory_for(config);
  const EventGenerator gen(config, options, states, loss, clock);

  const auto n_pulses = static_cast<std::uint64_t>(
      std::llround(config.duration_s * static_cast<double>(kPsPerSecond) /
                   static_cast<double>(config.pulse_period_ps())));
  const std::uint64_t n_blocks = (n_pulses + kBlockPulses - 1) / kBlockPulses;
  std::vector<BlockOutput> blocks(n_blocks);

  auto work = [&](std::uint64_t b) {
    const std::uint64_t first = b * kBlockPulses;
    blocks[b] = gen.run_block(b, first, std::min(first + kBlockPulses, n_pulses));
  };

  const auto n_threads = static_cast<std::uint64_t>(std::max(1, options.threads));
  if (n_threads == 1 || n_blocks < 2) {
    for (std::uint64_t b = 0; b < n_blocks; ++b) work(b);
  } else {
    std::atomic<std::uint64_t> next{0};
    std::vector<std::thread> pool;
    for (std::uint64_t k = 0; k < std::min(n_threads, n_blocks); ++k) {
      pool.emplace_back([&] {
        for (std::uint64_t b = next++; b < n_blocks; b = next++) work(b);
      });
    }
    for (auto& th : pool) th.join();
  }

  SimResult result;
  std::size_t na = 0, nb = 0, nt = 0;
  for (const auto& blk : blocks) {
    na += blk.alice.size();
    nb += blk.bob.size();
    nt += blk.truth.size();
  }
  result.alice_tags.reserve(na);
  result.bob_tags.reserve(nb);
  result.truth.reserve(nt);
  for (auto& blk : blocks) {
    result.alice_tags.insert(result.alice_tags.end(), blk.alice.begin(), blk.alice.end());
    result.bob_tags.insert(result.bob_tags.end(), blk.bob.begin(), blk.bob.end());
    result.truth.insert(result.truth.end(), blk.truth.begin(), blk.truth.end());
    blk = BlockOutput{};
  }
  // Jitter and latency let tags cross block boundaries.
  std::sort(result.alice_tags.begin(), result.alice_tags.end(), tag_before);
  std::sort(result.bob_tags.begin(), result.bob_tags.end(), tag_before);
  return result;
}

double expected_fourfold_rate(const SimConfig& config) {
  const double p2 = config.double_pair_prob;
  const double both_fire = (config.pair_prob_hsp + p2) * (config.pair_prob_epr + p2);
  const double eta = config.detector_efficiency;
  const double transmission = std::pow(10.0, -config.quantum_link_loss_db / 10.0);
  return config.pump_rep_rate_hz * both_fire * 0.5 * eta * eta * eta * transmission * eta;
}

void write_truth_jsonl(std::ostream& out, const std::vector<TruthRecord>& truth) {
  for (const TruthRecord& r : truth) {
    nlohmann::ordered_json j;
    j["pulse_index"] = r.pulse_index;
    if (r.bsm_outcome) {
      j["bsm_outcome"] = std::string(to_string(r.bsm_outcome->bell));
      j["identified"] = r.bsm_outcome->identified;
    } else {
      j["bsm_outcome"] = nullptr;
      j["identified"] = false;
    }
    j["genuine"] = r.genuine;
    j["photon3_fate"] = r.photon3_fate == PhotonFate::Transmitted ? "transmitted" : "lost";
    j["bob_channel"] = r.bob_channel ? nlohmann::ordered_json(std::string(to_string(*r.bob_channel)))
                                     : nlohmann::ordered_json(nullptr);
    j["feedforward_received"] = r.feedforward_received;
    j["correction_applied"] = r.correction_applied;
    j["ideal_output_fidelity"] = r.ideal_output_fidelity;
    out << j.dump() << '\n';
  }
}

}  // namespace qtele
