#include <array>
#include <cmath>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include "qtele/errors.hpp"
#include "qtele/tomography.hpp"

namespace qtele {

namespace {

constexpr std::array<PolLabel, 4> kProcessInputs = {PolLabel::H, PolLabel::V, PolLabel::P, PolLabel::L};

// Which of H, V, P, L the ket is, up to global phase.
int input_slot(const Ket& k) {
  if (k.dim() != 2) return -1;
  for (std::size_t s = 0; s < kProcessInputs.size(); ++s) {
    const Complex overlap = standard_ket(kProcessInputs[s]).amplitudes().dot(k.amplitudes());
    if (std::abs(std::abs(overlap) - 1.0) < 1e-9) return static_cast<int>(s);
  }
  return -1;
}

}  // namespace

ProcessMatrix process_from_states(std::span<const StatePair> pairs, const ProcessOptions& options) {
  if (pairs.size() != 4) throw InvalidInput("process_from_states: need exactly four input/output pairs");
  std::array<const StatePair*, 4> by_slot{};
  for (const StatePair& p : pairs) {
    const int s = input_slot(p.input);
    if (s < 0 || by_slot[static_cast<std::size_t>(s)] != nullptr) {
      throw InvalidInput("process_from_states: inputs must be exactly H, V, P, L");
    }
    if (p.output.dim() != 2) throw InvalidInput("process_from_states: outputs must be qubit states");
    by_slot[static_cast<std::size_t>(s)] = &p;
  }

  // Row (input, a, b), column (l, k): (sigma_l rho_in sigma_k)_ab.
  CMatrix a(16, 16);
  CVector rhs(16);
  for (int s = 0; s < 4; ++s) {
    const StatePair& p = *by_slot[static_cast<std::size_t>(s)];
    const CMatrix rho_in = DensityMatrix::from_ket(p.input).matrix();
    for (int l = 0; l < 4; ++l) {
      for (int k = 0; k < 4; ++k) {
        const CMatrix term = pauli(l).matrix() * rho_in * pauli(k).matrix();
        for (int r = 0; r < 2; ++r) {
          for (int c = 0; c < 2; ++c) a(4 * s + 2 * r + c, 4 * l + k) = term(r, c);
        }
      }
    }
    for (int r = 0; r < 2; ++r) {
      for (int c = 0; c < 2; ++c) rhs(4 * s + 2 * r + c) = p.output(r, c);
    }
  }
  const CVector x = a.fullPivLu().solve(rhs);

  CMatrix chi(4, 4);
  for (int l = 0; l < 4; ++l) {
    for (int k = 0; k < 4; ++k) chi(l, k) = x(4 * l + k);
  }
  chi = 0.5 * (chi + chi.adjoint());

  if (options.project_cp) {
    Eigen::SelfAdjointEigenSolver<CMatrix> es(chi);
    Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0);
    ev /= ev.sum();
    chi = es.eigenvectors() * ev.cast<Complex>().asDiagonal() * es.eigenvectors().adjoint();
    chi = 0.5 * (chi + chi.adjoint());
  }
  return {chi};
}

double process_fidelity(const ProcessMatrix& chi) { return chi.chi(0, 0).real(); }

CMatrix apply_process(const ProcessMatrix& chi, const CMatrix& rho) {
  CMatrix out = CMatrix::Zero(2, 2);
  for (int l = 0; l < 4; ++l) {
    for (int k = 0; k < 4; ++k) out += chi.chi(l, k) * pauli(l).matrix() * rho * pauli(k).matrix();
  }
  return out;
}

}  // namespace qtele
