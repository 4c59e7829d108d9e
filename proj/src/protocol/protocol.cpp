#include "qtele/protocol.hpp"

#include <cmath>

#include "qtele/errors.hpp"

namespace qtele {

InputState::InputState(Complex alpha, Complex beta) : alpha_(alpha), beta_(beta) {
  const double norm2 = std::norm(alpha) + std::norm(beta);
  if (std::abs(norm2 - 1.0) > kNormTolerance) {
    throw InvalidInput("InputState: |alpha|^2 + |beta|^2 must be 1");
  }
}

InputState InputState::from_label(PolLabel label) {
  const Ket k = standard_ket(label);
  return InputState(k[0], k[1]);
}

Ket InputState::ket() const {
  CVector v(2);
  v << alpha_, beta_;
  return Ket(std::move(v));
}

void NoiseParams::validate() const {
  auto in_unit = [](double x) { return x >= 0.0 && x <= 1.0; };
  if (!in_unit(visibility) || !in_unit(depolarization) ||
      !in_unit(feedforward_applied_prob)) {
    throw InvalidInput("NoiseParams: all fields must lie in [0, 1]");
  }
}

CorrectionOp correction_for(const BsmOutcome& outcome) {
  if (!outcome.identified) {
    throw InvalidInput("correction_for: Phi outcomes are not part of the protocol");
  }
  return outcome.bell == BellState::PsiMinus ? CorrectionOp::Identity
                                             : CorrectionOp::PiPhaseShift;
}

const Operator& correction_operator(CorrectionOp op) {
  return op == CorrectionOp::Identity ? pauli(0) : sigma_z();
}

std::vector<DetectorTriple> detector_pattern(const BsmOutcome& outcome) {
  using D = Detector;
  if (!outcome.identified) {
    throw InvalidInput("detector_pattern: outcome cannot be identified");
  }
  if (outcome.bell == BellState::PsiMinus) {
    return {{D::t, D::a, D::d}, {D::t, D::b, D::c}};
  }
  return {{D::t, D::a, D::b}, {D::t, D::c, D::d}};
}

DensityMatrix conditioned_state(const InputState& input, BellState bell,
                                const NoiseParams& noise) {
  noise.validate();
  const Ket joint = tensor(input.ket(), bell_ket(BellState::PsiMinus));
  const BellProjection proj = project_bell(DensityMatrix::from_ket(joint), bell);
  // Every Bell outcome has probability 1/4 for a product input, so the
  // post state always exists.
  CMatrix rho = proj.post_state->matrix();
  rho(0, 1) *= noise.visibility;
  rho(1, 0) *= noise.visibility;
  const double p = noise.depolarization;
  rho = (1.0 - p) * rho + (p / 2.0) * CMatrix::Identity(2, 2);
  return DensityMatrix(rho);
}

DensityMatrix teleport_analytic(const InputState& input,
                                const BsmOutcome& outcome,
                                bool apply_correction,
                                const NoiseParams& noise) {
  if (!outcome.identified) {
    throw InvalidInput("teleport_analytic: outcome cannot be identified");
  }
  const DensityMatrix rho = conditioned_state(input, outcome.bell, noise);
  if (!apply_correction) return rho;

  const Operator& u = correction_operator(correction_for(outcome));
  const double q = noise.feedforward_applied_prob;
  const CMatrix corrected = apply(u, rho).matrix();
  return DensityMatrix(q * corrected + (1.0 - q) * rho.matrix());
}

double first_outcome_probability(const DensityMatrix& rho, Basis basis) {
  return fidelity_pure(rho, basis_kets(basis)[0]);
}

}  // namespace qtele
