// Shared helpers for the unit tests: random states and operators drawn from
// hand-rolled generators so every property test is reproducible.

#pragma once

#include <cmath>
#include <numbers>
#include <random>

#include "qtele/qcore.hpp"
#include "qtele/rng.hpp"

namespace qtele::testing {

inline Ket random_ket(Rng& rng, int dim = 2) {
  std::normal_distribution<double> g;
  CVector v(dim);
  for (int i = 0; i < dim; ++i) v(i) = Complex(g(rng), g(rng));
  return Ket(v / v.norm());
}

/// Mixed state from a random Ginibre matrix.
inline DensityMatrix random_density(Rng& rng, int dim = 2) {
  std::normal_distribution<double> g;
  CMatrix a(dim, dim);
  for (int r = 0; r < dim; ++r)
    for (int c = 0; c < dim; ++c) a(r, c) = Complex(g(rng), g(rng));
  CMatrix rho = a * a.adjoint();
  rho /= rho.trace().real();
  return DensityMatrix(0.5 * (rho + rho.adjoint()));
}

/// Haar-ish unitary via QR of a Ginibre matrix.
inline Operator random_unitary(Rng& rng, int dim = 2) {
  std::normal_distribution<double> g;
  CMatrix a(dim, dim);
  for (int r = 0; r < dim; ++r)
    for (int c = 0; c < dim; ++c) a(r, c) = Complex(g(rng), g(rng));
  Eigen::HouseholderQR<CMatrix> qr(a);
  CMatrix q = qr.householderQ();
  return Operator(q);
}

inline double max_abs_diff(const CMatrix& a, const CMatrix& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

inline CMatrix projector(const Ket& k) { return k.amplitudes() * k.amplitudes().adjoint(); }

}  // namespace qtele::testing
