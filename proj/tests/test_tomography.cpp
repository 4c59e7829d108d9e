#include <sstream>

#include "doctest.h"
#include "qtele/errors.hpp"
#include "qtele/tomography.hpp"
#include "support.hpp"

using namespace qtele;
using testing::max_abs_diff;

namespace {

// Counts in exact proportion to the Born probabilities of rho.
std::vector<CountRecord> exact_counts(const DensityMatrix& rho, double per_basis) {
  std::vector<CountRecord> out;
  for (Basis b : {Basis::HV, Basis::PM, Basis::RL}) {
    const double p = fidelity_pure(rho, basis_kets(b)[0]);
    const auto n1 = static_cast<std::uint64_t>(std::llround(p * per_basis));
    out.push_back({b, n1, static_cast<std::uint64_t>(per_basis) - n1});
  }
  return out;
}

std::vector<CountRecord> sampled_counts(const DensityMatrix& rho, std::uint64_t per_basis, Rng& rng) {
  std::vector<CountRecord> out;
  for (Basis b : {Basis::HV, Basis::PM, Basis::RL}) {
    std::binomial_distribution<std::uint64_t> draw(per_basis, fidelity_pure(rho, basis_kets(b)[0]));
    const std::uint64_t n1 = draw(rng);
    out.push_back({b, n1, per_basis - n1});
  }
  return out;
}

double trace_distance(const CMatrix& a, const CMatrix& b) {
  Eigen::SelfAdjointEigenSolver<CMatrix> es(a - b);
  return 0.5 * es.eigenvalues().cwiseAbs().sum();
}

using Channel = std::function<CMatrix(const CMatrix&)>;

ProcessMatrix chi_of(const Channel& ch) {
  std::vector<StatePair> pairs;
  for (PolLabel l : {PolLabel::H, PolLabel::V, PolLabel::P, PolLabel::L}) {
    const Ket k = standard_ket(l);
    pairs.push_back({k, DensityMatrix(ch(testing::projector(k)))});
  }
  return process_from_states(pairs);
}

Channel unitary_channel(int pauli_index) {
  return [pauli_index](const CMatrix& rho) {
    const CMatrix& s = pauli(pauli_index).matrix();
    return CMatrix(s * rho * s.adjoint());
  };
}

// Depolarizing channel written as its Kraus sum, not as (1-p) rho + p I/2.
Channel depolarizing(double p) {
  return [p](const CMatrix& rho) {
    CMatrix out = (1 - 3 * p / 4) * rho;
    for (int k = 1; k <= 3; ++k) out += (p / 4) * pauli(k).matrix() * rho * pauli(k).matrix();
    return out;
  };
}

}  // namespace

TEST_CASE("linear inversion") {
  const auto h = DensityMatrix::from_ket(standard_ket(PolLabel::H));
  CHECK(max_abs_diff(linear_inversion(exact_counts(h, 1000)), h.matrix()) < 1e-12);
  const auto mixed = DensityMatrix::maximally_mixed(2);
  CHECK(max_abs_diff(linear_inversion(exact_counts(mixed, 1000)), mixed.matrix()) < 1e-12);

  const std::vector<CountRecord> all_first = {{Basis::HV, 10, 0}, {Basis::PM, 10, 0}, {Basis::RL, 10, 0}};
  Eigen::SelfAdjointEigenSolver<CMatrix> es(linear_inversion(all_first));
  CHECK(es.eigenvalues().minCoeff() < 0.0);
  CHECK(project_psd(linear_inversion(all_first)).eigenvalues().minCoeff() >= 0.0);

  const std::vector<CountRecord> missing = {{Basis::HV, 10, 0}, {Basis::PM, 0, 0}, {Basis::RL, 5, 5}};
  CHECK_THROWS_AS(linear_inversion(missing), InvalidInput);
}

TEST_CASE("parameterization round-trip") {
  Rng rng(51);
  for (int i = 0; i < 20; ++i) {
    const auto rho = testing::random_density(rng);
    CHECK(max_abs_diff(rho_from_params(params_from_rho(rho)).matrix(), rho.matrix()) < 1e-10);
  }
}

TEST_CASE("likelihood gradient matches finite differences") {
  Rng rng(52);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 20; ++i) {
    const auto counts = sampled_counts(testing::random_density(rng), 200, rng);
    TParams t{u(rng), u(rng), u(rng), u(rng)};
    const TParams g = log_likelihood_gradient(t, counts);
    for (int k = 0; k < 4; ++k) {
      const double h = 1e-6;
      TParams up = t, dn = t;
      up[static_cast<std::size_t>(k)] += h;
      dn[static_cast<std::size_t>(k)] -= h;
      const double fd = (log_likelihood(up, counts) - log_likelihood(dn, counts)) / (2 * h);
      CHECK(std::abs(g[static_cast<std::size_t>(k)] - fd) <= 1e-5 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST_CASE("MLE self-consistency") {
  const auto p = DensityMatrix::from_ket(standard_ket(PolLabel::P));
  const TomoResult rp = mle_reconstruct(exact_counts(p, 1e4));
  CHECK(rp.converged);
  CHECK(state_fidelity(rp.rho, standard_ket(PolLabel::P)) >= 0.999);

  Rng rng(53);
  for (int i = 0; i < 50; ++i) {
    const Ket k = testing::random_ket(rng);
    const TomoResult r = mle_reconstruct(exact_counts(DensityMatrix::from_ket(k), 1e4));
    CHECK(r.converged);
    CHECK(state_fidelity(r.rho, k) >= 0.999);
  }

  for (int i = 0; i < 5; ++i) {
    const auto mixed = DensityMatrix::maximally_mixed(2);
    const TomoResult r = mle_reconstruct(sampled_counts(mixed, 10000, rng));
    CHECK(trace_distance(r.rho.matrix(), mixed.matrix()) < 0.02);
  }

  // Never worse than the projected linear estimate; always physical.
  for (int i = 0; i < 30; ++i) {
    const auto counts = sampled_counts(testing::random_density(rng), 30, rng);
    const TomoResult r = mle_reconstruct(counts);
    CHECK(r.rho.eigenvalues().minCoeff() >= -1e-12);
    CHECK(r.log_likelihood >= log_likelihood(project_psd(linear_inversion(counts)), counts) - 1e-9);
  }

  // Missing bases are allowed as long as something was measured.
  const std::vector<CountRecord> only_hv = {{Basis::HV, 90, 10}};
  const TomoResult partial = mle_reconstruct(only_hv);
  CHECK(partial.converged);
  CHECK(partial.rho(0, 0).real() == doctest::Approx(0.9).epsilon(1e-4));
  CHECK_THROWS_AS(mle_reconstruct(std::vector<CountRecord>{{Basis::HV, 0, 0}}), InvalidInput);

  MleOptions tight;
  tight.max_iterations = 1;
  const TomoResult stopped = mle_reconstruct(sampled_counts(testing::random_density(rng), 100, rng), tight);
  CHECK(stopped.iterations <= 1);
}

TEST_CASE("process tomography oracles") {
  const ProcessMatrix id = chi_of([](const CMatrix& r) { return r; });
  CMatrix e00 = CMatrix::Zero(4, 4);
  e00(0, 0) = 1.0;
  CHECK(max_abs_diff(id.chi, e00) < 1e-9);
  CHECK(process_fidelity(id) == doctest::Approx(1.0));

  for (int k = 1; k <= 3; ++k) {
    CMatrix expect = CMatrix::Zero(4, 4);
    expect(k, k) = 1.0;
    CHECK(max_abs_diff(chi_of(unitary_channel(k)).chi, expect) < 1e-9);
  }
  for (double p : {0.1, 0.3, 0.5, 1.0}) {
    const ProcessMatrix chi = chi_of(depolarizing(p));
    CMatrix expect = CMatrix::Zero(4, 4);
    expect(0, 0) = 1 - 3 * p / 4;
    for (int k = 1; k <= 3; ++k) expect(k, k) = p / 4;
    CHECK(max_abs_diff(chi.chi, expect) < 1e-9);
    CHECK(process_fidelity(chi) == doctest::Approx(1 - 3 * p / 4).epsilon(1e-9));
  }
  const ProcessMatrix full = chi_of([](const CMatrix&) { return CMatrix(CMatrix::Identity(2, 2) / 2.0); });
  CHECK(process_fidelity(full) == doctest::Approx(0.25));
  CHECK(max_abs_diff(full.chi, CMatrix::Identity(4, 4) / 4.0) < 1e-9);

  // Inputs may carry any global phase and come in any order.
  std::vector<StatePair> pairs;
  for (PolLabel l : {PolLabel::L, PolLabel::P, PolLabel::V, PolLabel::H}) {
    const Ket k(standard_ket(l).amplitudes() * std::polar(1.0, 1.3));
    pairs.push_back({k, DensityMatrix::from_ket(k)});
  }
  CHECK(max_abs_diff(process_from_states(pairs).chi, e00) < 1e-9);
  pairs[0] = {standard_ket(PolLabel::R), DensityMatrix::from_ket(standard_ket(PolLabel::R))};
  CHECK_THROWS_AS(process_from_states(pairs), InvalidInput);
}

TEST_CASE("process matrix of a random channel") {
  Rng rng(54);
  for (int trial = 0; trial < 5; ++trial) {
    // Random two-Kraus channel from a random isometry.
    const Operator u = testing::random_unitary(rng, 4);
    const CMatrix k0 = u.matrix().block(0, 0, 2, 2);
    const CMatrix k1 = u.matrix().block(2, 0, 2, 2);
    const Channel ch = [&](const CMatrix& r) { return CMatrix(k0 * r * k0.adjoint() + k1 * r * k1.adjoint()); };
    const ProcessMatrix chi = chi_of(ch);
    CHECK(max_abs_diff(chi.chi, chi.chi.adjoint()) < 1e-9);
    CHECK(std::abs(chi.chi.trace() - 1.0) < 1e-9);
    for (int i = 0; i < 10; ++i) {
      const auto rho = testing::random_density(rng);
      CHECK(max_abs_diff(apply_process(chi, rho.matrix()), ch(rho.matrix())) < 1e-9);
    }

    // Haar average fidelity equals (2 chi00 + 1) / 3.
    double avg = 0.0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
      const Ket k = testing::random_ket(rng);
      avg += (k.amplitudes().adjoint() * ch(testing::projector(k)) * k.amplitudes())(0, 0).real();
    }
    avg /= n;
    CHECK(std::abs(avg - (2 * process_fidelity(chi) + 1) / 3) < 0.01);
  }

  ProcessOptions cp;
  cp.project_cp = true;
  std::vector<StatePair> pairs;
  for (PolLabel l : {PolLabel::H, PolLabel::V, PolLabel::P, PolLabel::L}) {
    // Slightly non-physical data: an over-polarized P output would give a
    // negative chi eigenvalue without the projection.
    const Ket k = standard_ket(l);
    pairs.push_back({k, DensityMatrix::from_ket(k)});
  }
  pairs[2].output = DensityMatrix::from_ket(standard_ket(PolLabel::H));
  const ProcessMatrix raw = process_from_states(pairs);
  const ProcessMatrix projected = process_from_states(pairs, cp);
  Eigen::SelfAdjointEigenSolver<CMatrix> es_raw(raw.chi), es_cp(projected.chi);
  CHECK(es_raw.eigenvalues().minCoeff() < -1e-6);
  CHECK(es_cp.eigenvalues().minCoeff() > -1e-12);
  CHECK(std::abs(projected.chi.trace() - 1.0) < 1e-9);
}

TEST_CASE("Monte Carlo uncertainties") {
  const Ket p = standard_ket(PolLabel::P);
  const CMatrix noisy = 0.85 * testing::projector(p) + 0.15 * CMatrix::Identity(2, 2) / 2.0;
  const auto counts = exact_counts(DensityMatrix(noisy), 50);
  const FidelityEstimate small = monte_carlo_sigma(counts, p, 400, 3);
  std::vector<CountRecord> big = counts;
  for (auto& c : big) {
    c.n_first *= 100;
    c.n_second *= 100;
  }
  const FidelityEstimate large = monte_carlo_sigma(big, p, 400, 3);
  CHECK(small.sigma / large.sigma == doctest::Approx(10.0).epsilon(0.25));
  CHECK(small.sigma >= 0.025);
  CHECK(small.sigma <= 0.05);

  const FidelityEstimate one = monte_carlo_sigma(counts, p, 1, 3);
  CHECK(one.sigma == 0.0);
  CHECK(one.n_resamples == 1);
  CHECK(monte_carlo_sigma(counts, p, 0, 3).sigma == 0.0);

  const FidelityEstimate again = monte_carlo_sigma(counts, p, 400, 3);
  CHECK(again.sigma == small.sigma);
  CHECK(again.value == small.value);

  const FidelityEstimate eig = eigenbasis_fidelity(80, 20, 2000, 4);
  CHECK(eig.value == doctest::Approx(0.8));
  // Poisson resampling of both counts: sigma ~ sqrt(f (1 - f) / N).
  CHECK(eig.sigma == doctest::Approx(0.04).epsilon(0.15));
  CHECK(eigenbasis_fidelity(80, 20, 1, 4).sigma == 0.0);
}

TEST_CASE("count and matrix I/O") {
  const std::vector<CountRecord> counts = {{Basis::HV, 12, 3}, {Basis::RL, 0, 7}};
  std::stringstream ss;
  write_counts_csv(ss, counts);
  CHECK(ss.str().rfind("basis,n_first,n_second\n", 0) == 0);
  const auto back = read_counts_csv(ss);
  REQUIRE(back.size() == 2);
  CHECK(back[1].basis == Basis::RL);
  CHECK(back[1].n_second == 7);

  std::stringstream bad("basis,n_first,n_second\nHV,1\n");
  CHECK_THROWS_AS(read_counts_csv(bad), InvalidInput);
  std::stringstream neg("basis,n_first,n_second\nHV,-1,2\n");
  CHECK_THROWS_AS(read_counts_csv(neg), InvalidInput);

  Rng rng(55);
  const CMatrix m = testing::random_density(rng).matrix();
  const auto j = nlohmann::json::parse(matrix_to_json(m).dump());
  CHECK(max_abs_diff(matrix_from_json(j), m) == 0.0);
}
