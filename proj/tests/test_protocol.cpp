#include <algorithm>
#include <map>

#include "doctest.h"
#include "qtele/errors.hpp"
#include "qtele/protocol.hpp"
#include "support.hpp"

using namespace qtele;

namespace {

InputState random_input(Rng& rng) {
  const Ket k = testing::random_ket(rng);
  return InputState(k[0], k[1]);
}

const NoiseParams kNoiseless{};

}  // namespace

TEST_CASE("input state normalization") {
  CHECK_NOTHROW(InputState(1.0, 0.0));
  CHECK_THROWS_AS(InputState(1.0, 1.0), InvalidInput);
  const InputState r = InputState::from_label(PolLabel::R);
  CHECK(std::abs(r.beta() - Complex(0, 1.0 / std::sqrt(2.0))) < 1e-15);
}

TEST_CASE("BSM outcome semantics") {
  CHECK(BsmOutcome::of(BellState::PsiMinus).identified);
  CHECK(BsmOutcome::of(BellState::PsiPlus).identified);
  CHECK_FALSE(BsmOutcome::of(BellState::PhiPlus).identified);
  CHECK_FALSE(BsmOutcome::of(BellState::PhiMinus).identified);

  CHECK(correction_for(BsmOutcome::of(BellState::PsiMinus)) == CorrectionOp::Identity);
  CHECK(correction_for(BsmOutcome::of(BellState::PsiPlus)) == CorrectionOp::PiPhaseShift);
  CHECK_THROWS_AS(correction_for(BsmOutcome::of(BellState::PhiPlus)), InvalidInput);
  CHECK(testing::max_abs_diff(correction_operator(CorrectionOp::PiPhaseShift).matrix(), sigma_z().matrix()) == 0.0);
}

TEST_CASE("detector patterns") {
  using D = Detector;
  const auto minus = detector_pattern(BsmOutcome::of(BellState::PsiMinus));
  const auto plus = detector_pattern(BsmOutcome::of(BellState::PsiPlus));
  CHECK(minus == std::vector<DetectorTriple>{{D::t, D::a, D::d}, {D::t, D::b, D::c}});
  CHECK(plus == std::vector<DetectorTriple>{{D::t, D::a, D::b}, {D::t, D::c, D::d}});
  for (const auto& m : minus) CHECK(std::find(plus.begin(), plus.end(), m) == plus.end());
  CHECK_THROWS_AS(detector_pattern(BsmOutcome::of(BellState::PhiMinus)), InvalidInput);
}

TEST_CASE("BSM sampling statistics") {
  Rng rng(21);
  std::map<BellState, int> hist;
  int identified = 0;
  const int n = 1'000'000;
  for (int i = 0; i < n; ++i) {
    const BsmOutcome o = sample_bsm(rng);
    ++hist[o.bell];
    identified += o.identified ? 1 : 0;
  }
  for (BellState b : kAllBellStates) CHECK(std::abs(hist[b] / double(n) - 0.25) < 0.002);
  CHECK(std::abs(identified / double(n) - 0.5) < 0.002);

  Rng a(99), b(99);
  for (int i = 0; i < 100; ++i) CHECK(sample_bsm(a).bell == sample_bsm(b).bell);
}

TEST_CASE("teleport_analytic examples") {
  const InputState p = InputState::from_label(PolLabel::P);
  const InputState h = InputState::from_label(PolLabel::H);
  const Ket kp = standard_ket(PolLabel::P);
  const auto minus = BsmOutcome::of(BellState::PsiMinus);
  const auto plus = BsmOutcome::of(BellState::PsiPlus);

  CHECK(fidelity_pure(teleport_analytic(p, minus, false, kNoiseless), kp) == doctest::Approx(1.0));
  CHECK(fidelity_pure(teleport_analytic(p, plus, false, kNoiseless), kp) == doctest::Approx(0.0));
  CHECK(fidelity_pure(teleport_analytic(h, plus, false, kNoiseless), standard_ket(PolLabel::H)) ==
        doctest::Approx(1.0));
  CHECK(fidelity_pure(teleport_analytic(p, plus, true, kNoiseless), kp) == doctest::Approx(1.0));

  for (double v : {0.0, 0.3, 0.81, 1.0}) {
    NoiseParams n;
    n.visibility = v;
    CHECK(fidelity_pure(teleport_analytic(p, minus, false, n), kp) == doctest::Approx((1 + v) / 2).epsilon(1e-12));
  }
  CHECK_THROWS_AS(teleport_analytic(p, BsmOutcome::of(BellState::PhiPlus), false, kNoiseless), InvalidInput);
  NoiseParams bad;
  bad.visibility = 1.2;
  CHECK_THROWS_AS(teleport_analytic(p, minus, false, bad), InvalidInput);
}

TEST_CASE("noise channel order and correction failure") {
  // Closed forms for the equator state P after Psi+ with correction applied
  // with probability q: the dephased, depolarized state has Bloch x = -v(1-p);
  // the correction flips it, so x = (2q - 1) v (1 - p).
  const InputState p = InputState::from_label(PolLabel::P);
  for (double v : {0.5, 0.9}) {
    for (double dep : {0.0, 0.2}) {
      for (double q : {0.0, 0.25, 1.0}) {
        const NoiseParams n{v, dep, q};
        const double x = (2 * q - 1) * v * (1 - dep);
        const double f = fidelity_pure(teleport_analytic(p, BsmOutcome::of(BellState::PsiPlus), true, n),
                                       standard_ket(PolLabel::P));
        CHECK(f == doctest::Approx((1 + x) / 2).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("ideal protocol is exact for random inputs") {
  Rng rng(22);
  for (int i = 0; i < 100; ++i) {
    const InputState in = random_input(rng);
    for (BellState b : {BellState::PsiMinus, BellState::PsiPlus}) {
      const auto rho = teleport_analytic(in, BsmOutcome::of(b), true, kNoiseless);
      CHECK(std::abs(fidelity_pure(rho, in.ket()) - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("noisy outputs stay physical and fidelity is monotone") {
  Rng rng(23);
  for (int i = 0; i < 20; ++i) {
    const InputState in = random_input(rng);
    for (BellState b : {BellState::PsiMinus, BellState::PsiPlus}) {
      double prev_v = 1.1;
      for (double v = 1.0; v >= -1e-12; v -= 0.1) {
        const NoiseParams n{std::max(v, 0.0), 0.1, 1.0};
        const double f = fidelity_pure(teleport_analytic(in, BsmOutcome::of(b), true, n), in.ket());
        CHECK(f <= prev_v + 1e-12);
        prev_v = f;
      }
      double prev_p = 1.1;
      for (double dep = 0.0; dep <= 1.0 + 1e-12; dep += 0.1) {
        const NoiseParams n{0.9, std::min(dep, 1.0), 1.0};
        const auto rho = teleport_analytic(in, BsmOutcome::of(b), true, n);
        CHECK(rho.eigenvalues().minCoeff() > -1e-12);
        const double f = fidelity_pure(rho, in.ket());
        CHECK(f <= prev_p + 1e-12);
        prev_p = f;
      }
    }
  }
}

TEST_CASE("measurement sampling") {
  Rng rng(24);
  const auto h = DensityMatrix::from_ket(standard_ket(PolLabel::H));
  for (int i = 0; i < 1000; ++i) CHECK(measure_in_basis(h, Basis::HV, rng) == 0);

  const auto mixed = DensityMatrix::maximally_mixed(2);
  for (Basis b : {Basis::HV, Basis::PM, Basis::RL}) {
    int first = 0;
    for (int i = 0; i < 100000; ++i) first += measure_in_basis(mixed, b, rng) == 0 ? 1 : 0;
    CHECK(std::abs(first / 1e5 - 0.5) < 0.005);
  }

  const auto r = teleport_analytic(InputState::from_label(PolLabel::R), BsmOutcome::of(BellState::PsiPlus), true,
                                   kNoiseless);
  for (int i = 0; i < 1000; ++i) CHECK(measure_in_basis(r, Basis::RL, rng) == 0);
}
