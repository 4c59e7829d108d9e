#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>

#include "qtele/errors.hpp"
#include "qtele/tomography.hpp"

namespace qtele {

namespace {

constexpr double kInitEigenFloor = 1e-3;

// Pauli operator measured by each Basis: HV -> z, PM -> x, RL -> y.
constexpr std::array<int, 3> kBasisPauli = {3, 1, 2};

struct Pooled {
  std::array<double, 3> n_first{};
  std::array<double, 3> n_second{};
};

Pooled pool(std::span<const CountRecord> counts) {
  Pooled p;
  for (const CountRecord& r : counts) {
    const auto b = static_cast<std::size_t>(r.basis);
    p.n_first[b] += static_cast<double>(r.n_first);
    p.n_second[b] += static_cast<double>(r.n_second);
  }
  return p;
}

const std::array<CVector, 3>& first_kets() {
  static const std::array<CVector, 3> kets = {
      basis_kets(Basis::HV)[0].amplitudes(),
      basis_kets(Basis::PM)[0].amplitudes(),
      basis_kets(Basis::RL)[0].amplitudes(),
  };
  return kets;
}

CMatrix t_matrix(const TParams& t) {
  CMatrix m(2, 2);
  m << Complex(t[0], 0.0), Complex(0.0, 0.0), Complex(t[2], t[3]), Complex(t[1], 0.0);
  return m;
}

// Bloch estimate with empty bases contributing zero.
CMatrix bloch_estimate(const Pooled& p, bool require_all) {
  CMatrix rho = pauli(0).matrix();
  for (std::size_t b = 0; b < 3; ++b) {
    const double total = p.n_first[b] + p.n_second[b];
    if (total <= 0.0) {
      if (require_all) {
        throw InvalidInput("linear_inversion: basis " +
                           std::string(to_string(static_cast<Basis>(b))) + " has no counts");
      }
      continue;
    }
    rho += ((p.n_first[b] - p.n_second[b]) / total) * pauli(kBasisPauli[b]).matrix();
  }
  return 0.5 * rho;
}

double norm2(const TParams& t) {
  return t[0] * t[0] + t[1] * t[1] + t[2] * t[2] + t[3] * t[3];
}

}  // namespace

CMatrix linear_inversion(std::span<const CountRecord> counts) {
  return bloch_estimate(pool(counts), true);
}

DensityMatrix project_psd(const CMatrix& m, double floor) {
  if (m.rows() != m.cols()) throw InvalidInput("project_psd: matrix must be square");
  const CMatrix h = 0.5 * (m + m.adjoint());
  Eigen::SelfAdjointEigenSolver<CMatrix> es(h);
  Eigen::VectorXd ev = es.eigenvalues().cwiseMax(floor);
  const double sum = ev.sum();
  if (!(sum > 0.0)) throw InvalidInput("project_psd: no positive spectrum");
  ev /= sum;
  const CMatrix out = es.eigenvectors() * ev.cast<Complex>().asDiagonal() * es.eigenvectors().adjoint();
  return DensityMatrix(0.5 * (out + out.adjoint()));
}

DensityMatrix rho_from_params(const TParams& t) {
  const double n = norm2(t);
  if (!(n > 0.0)) throw InvalidInput("rho_from_params: zero parameter vector");
  const CMatrix tm = t_matrix(t);
  const CMatrix m = tm.adjoint() * tm / n;
  return DensityMatrix(0.5 * (m + m.adjoint()));
}

TParams params_from_rho(const DensityMatrix& rho) {
  if (rho.dim() != 2) throw InvalidInput("params_from_rho: expected a qubit");
  const double a = rho(0, 0).real();
  const Complex b = rho(0, 1);
  const double d = rho(1, 1).real();
  if (d <= 0.0) {
    // rho = |H><H|: T = [[1, 0], [0, 0]].
    return {std::sqrt(std::max(a, 0.0)), 0.0, 0.0, 0.0};
  }
  const double t2 = std::sqrt(d);
  const Complex c = std::conj(b) / t2;
  const double t1 = std::sqrt(std::max(a - std::norm(c), 0.0));
  return {t1, t2, c.real(), c.imag()};
}

double log_likelihood(const DensityMatrix& rho, std::span<const CountRecord> counts) {
  const Pooled p = pool(counts);
  double ll = 0.0;
  for (std::size_t b = 0; b < 3; ++b) {
    const CVector& k = first_kets()[b];
    const double p1 = std::clamp(k.dot(rho.matrix() * k).real(), 0.0, 1.0);
    const double p2 = 1.0 - p1;
    if (p.n_first[b] > 0.0) ll += p.n_first[b] * std::log(p1);
    if (p.n_second[b] > 0.0) ll += p.n_second[b] * std::log(p2);
  }
  return ll;
}

double log_likelihood(const TParams& t, std::span<const CountRecord> counts) {
  return log_likelihood(rho_from_params(t), counts);
}

TParams log_likelihood_gradient(const TParams& t, std::span<const CountRecord> counts) {
  const Pooled p = pool(counts);
  const CMatrix tm = t_matrix(t);
  const double tr = norm2(t);

  std::array<CMatrix, 4> dt;
  for (auto& m : dt) m = CMatrix::Zero(2, 2);
  dt[0](0, 0) = 1.0;
  dt[1](1, 1) = 1.0;
  dt[2](1, 0) = 1.0;
  dt[3](1, 0) = Complex(0.0, 1.0);

  TParams grad{};
  for (std::size_t b = 0; b < 3; ++b) {
    const CVector& k = first_kets()[b];
    // Outcome 2 projector is I - |k><k|, so <b2|M|b2> = tr M - <k|M|k>.
    const CVector tk = tm * k;
    const double m1 = tk.squaredNorm();
    const double m2 = tr - m1;
    for (std::size_t i = 0; i < 4; ++i) {
      const double dm1 = 2.0 * tk.dot(dt[i] * k).real();
      const double dtr = 2.0 * t[i];
      const double dm2 = dtr - dm1;
      // d ln(m/tr) = dm/m - dtr/tr
      if (p.n_first[b] > 0.0) grad[i] += p.n_first[b] * (dm1 / m1 - dtr / tr);
      if (p.n_second[b] > 0.0) grad[i] += p.n_second[b] * (dm2 / m2 - dtr / tr);
    }
  }
  return grad;
}

TomoResult mle_reconstruct(std::span<const CountRecord> counts, const MleOptions& options) {
  const Pooled pooled = pool(counts);
  double grand_total = 0.0;
  for (std::size_t b = 0; b < 3; ++b) grand_total += pooled.n_first[b] + pooled.n_second[b];
  if (grand_total <= 0.0) throw InvalidInput("mle_reconstruct: no counts in any basis");

  TParams t = params_from_rho(project_psd(bloch_estimate(pooled, false), kInitEigenFloor));
  double ll = log_likelihood(t, counts);

  TomoResult result;
  double step = 1e-2 / std::max(1.0, grand_total);
  for (int it = 1; it <= options.max_iterations; ++it) {
    result.iterations = it;
    const TParams g = log_likelihood_gradient(t, counts);

    TParams trial{};
    double trial_ll = -std::numeric_limits<double>::infinity();
    bool improved = false;
    while (step > 1e-300) {
      for (std::size_t i = 0; i < 4; ++i) trial[i] = t[i] + step * g[i];
      if (norm2(trial) > 0.0) {
        trial_ll = log_likelihood(trial, counts);
        if (trial_ll >= ll) {
          improved = true;
          break;
        }
      }
      step *= 0.5;
    }
    if (!improved) {
      result.converged = true;
      break;
    }
    // rho is invariant under rescaling T; keep |t| = 1.
    const double n = std::sqrt(norm2(trial));
    for (double& x : trial) x /= n;
    const double change = trial_ll - ll;
    t = trial;
    ll = trial_ll;
    step *= 1.5 * n * n;
    if (std::abs(change) < options.relative_tolerance * std::max(std::abs(ll), 1.0)) {
      result.converged = true;
      break;
    }
  }
  result.rho = rho_from_params(t);
  result.log_likelihood = ll;
  return result;
}

double state_fidelity(const DensityMatrix& rho, const Ket& ideal) {
  return fidelity_pure(rho, ideal);
}

}  // namespace qtele
