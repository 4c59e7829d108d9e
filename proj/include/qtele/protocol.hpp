// The teleportation protocol as exact state algebra: input preparation,
// Bell-state-measurement semantics, corrections, and the scalar noise
// channels that summarize optical imperfections.

#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <vector>

#include "qtele/qcore.hpp"

namespace qtele {

/// alpha|H> + beta|V>.
class InputState {
 public:
  InputState(Complex alpha, Complex beta);
  static InputState from_label(PolLabel label);

  Complex alpha() const { return alpha_; }
  Complex beta() const { return beta_; }
  Ket ket() const;

 private:
  Complex alpha_;
  Complex beta_;
};

struct BsmOutcome {
  BellState bell = BellState::PsiMinus;
  bool identified = true;

  static BsmOutcome of(BellState b) {
    return {b, b == BellState::PsiMinus || b == BellState::PsiPlus};
  }
};

enum class CorrectionOp { Identity, PiPhaseShift };

/// Alice's detectors (t = trigger, a..d = BSM outputs) and Bob's
/// (e, f = analyzer outputs, ff = received classical pulse).
enum class Detector : std::uint8_t { t = 0, a, b, c, d, e, f, ff };

using DetectorTriple = std::array<Detector, 3>;

struct NoiseParams {
  /// Off-diagonal scaling of photon 3's state in {H,V} after the BSM.
  double visibility = 1.0;
  /// White-noise admixture: rho -> (1-p) rho + p I/2.
  double depolarization = 0.0;
  /// Probability that a requested correction is actually applied.
  double feedforward_applied_prob = 1.0;

  void validate() const;
};

CorrectionOp correction_for(const BsmOutcome& outcome);
const Operator& correction_operator(CorrectionOp op);

/// Alice three-fold patterns that announce `outcome`.
std::vector<DetectorTriple> detector_pattern(const BsmOutcome& outcome);

/// Uniform over the four Bell states.
template <class Rng>
BsmOutcome sample_bsm(Rng& rng) {
  std::uniform_int_distribution<int> pick(0, 3);
  return BsmOutcome::of(kAllBellStates[static_cast<std::size_t>(pick(rng))]);
}

/// Photon 3's state conditioned on `bell`, after BSM dephasing and
/// depolarization. Defined for all four outcomes; no correction applied.
DensityMatrix conditioned_state(const InputState& input, BellState bell,
                                const NoiseParams& noise);

/// Photon 3's state after an identified BSM, the noise channels, and (when
/// requested) the correction applied with probability
/// `noise.feedforward_applied_prob`.
DensityMatrix teleport_analytic(const InputState& input,
                                const BsmOutcome& outcome,
                                bool apply_correction,
                                const NoiseParams& noise);

/// Probability of outcome 0 when measuring `rho` in `basis`.
double first_outcome_probability(const DensityMatrix& rho, Basis basis);

/// Returns 0 for the first basis ket, 1 for the second.
template <class Rng>
int measure_in_basis(const DensityMatrix& rho, Basis basis, Rng& rng) {
  std::bernoulli_distribution first(first_outcome_probability(rho, basis));
  return first(rng) ? 0 : 1;
}

}  // namespace qtele
