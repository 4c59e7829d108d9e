#include "qtele/qcore.hpp"

#include <unsupported/Eigen/KroneckerProduct>

#include <algorithm>
#include <cmath>
#include <string>

#include "qtele/errors.hpp"

namespace qtele {

namespace {

const double kInvSqrt2 = 1.0 / std::sqrt(2.0);
constexpr Complex kI{0.0, 1.0};

CVector vec2(Complex a, Complex b) {
  CVector v(2);
  v << a, b;
  return v;
}

CVector vec4(Complex a, Complex b, Complex c, Complex d) {
  CVector v(4);
  v << a, b, c, d;
  return v;
}

}  // namespace

PolLabel parse_pol_label(std::string_view text) {
  if (text == "H") return PolLabel::H;
  if (text == "V") return PolLabel::V;
  if (text == "P") return PolLabel::P;
  if (text == "M") return PolLabel::M;
  if (text == "R") return PolLabel::R;
  if (text == "L") return PolLabel::L;
  throw InvalidInput("unknown polarization label '" + std::string(text) + "'");
}

std::string_view to_string(PolLabel label) {
  switch (label) {
    case PolLabel::H: return "H";
    case PolLabel::V: return "V";
    case PolLabel::P: return "P";
    case PolLabel::M: return "M";
    case PolLabel::R: return "R";
    case PolLabel::L: return "L";
  }
  return "?";
}

Basis parse_basis(std::string_view text) {
  if (text == "HV" || text == "H/V") return Basis::HV;
  if (text == "PM" || text == "P/M") return Basis::PM;
  if (text == "RL" || text == "R/L") return Basis::RL;
  throw InvalidInput("unknown measurement basis '" + std::string(text) + "'");
}

std::string_view to_string(Basis basis) {
  switch (basis) {
    case Basis::HV: return "HV";
    case Basis::PM: return "PM";
    case Basis::RL: return "RL";
  }
  return "?";
}

Basis eigenbasis_of(PolLabel label) {
  switch (label) {
    case PolLabel::H:
    case PolLabel::V: return Basis::HV;
    case PolLabel::P:
    case PolLabel::M: return Basis::PM;
    case PolLabel::R:
    case PolLabel::L: return Basis::RL;
  }
  return Basis::HV;
}

BellState parse_bell_state(std::string_view text) {
  if (text == "PsiMinus") return BellState::PsiMinus;
  if (text == "PsiPlus") return BellState::PsiPlus;
  if (text == "PhiMinus") return BellState::PhiMinus;
  if (text == "PhiPlus") return BellState::PhiPlus;
  throw InvalidInput("unknown Bell state '" + std::string(text) + "'");
}

std::string_view to_string(BellState bell) {
  switch (bell) {
    case BellState::PsiMinus: return "PsiMinus";
    case BellState::PsiPlus: return "PsiPlus";
    case BellState::PhiMinus: return "PhiMinus";
    case BellState::PhiPlus: return "PhiPlus";
  }
  return "?";
}

// ---------------------------------------------------------------------------

Ket::Ket(CVector amplitudes) : amps_(std::move(amplitudes)) {
  if (amps_.size() == 0) throw InvalidInput("Ket: empty amplitude vector");
  const double norm2 = amps_.squaredNorm();
  if (std::abs(norm2 - 1.0) > kNormTolerance) {
    throw InvalidInput("Ket: amplitudes not normalized (|psi|^2 = " +
                       std::to_string(norm2) + ")");
  }
}

DensityMatrix::DensityMatrix(const CMatrix& entries) {
  if (entries.rows() == 0 || entries.rows() != entries.cols()) {
    throw InvalidInput("DensityMatrix: matrix must be square and non-empty");
  }
  const CMatrix herm_err = entries - entries.adjoint();
  if (herm_err.cwiseAbs().maxCoeff() > kHermitianTolerance) {
    throw InvalidInput("DensityMatrix: matrix is not Hermitian");
  }
  const Complex tr = entries.trace();
  if (std::abs(tr - Complex(1.0, 0.0)) > kNormTolerance) {
    throw InvalidInput("DensityMatrix: trace is not 1 (got " +
                       std::to_string(tr.real()) + ")");
  }
  rho_ = 0.5 * (entries + entries.adjoint());
  if (eigenvalues().minCoeff() < -kPsdTolerance) {
    throw InvalidInput("DensityMatrix: matrix is not positive semidefinite");
  }
}

DensityMatrix DensityMatrix::from_ket(const Ket& ket) {
  return DensityMatrix(ket.amplitudes() * ket.amplitudes().adjoint());
}

DensityMatrix DensityMatrix::maximally_mixed(int dim) {
  return DensityMatrix(CMatrix::Identity(dim, dim) / static_cast<double>(dim));
}

Eigen::VectorXd DensityMatrix::eigenvalues() const {
  Eigen::SelfAdjointEigenSolver<CMatrix> solver(rho_, Eigen::EigenvaluesOnly);
  return solver.eigenvalues();
}

Operator::Operator(CMatrix entries) : m_(std::move(entries)) {
  if (m_.rows() == 0 || m_.rows() != m_.cols()) {
    throw InvalidInput("Operator: matrix must be square and non-empty");
  }
  const CMatrix defect =
      m_.adjoint() * m_ - CMatrix::Identity(m_.rows(), m_.cols());
  unitary_ = defect.cwiseAbs().maxCoeff() <= kNormTolerance;
}

const Operator& pauli(int index) {
  static const std::array<Operator, 4> table = [] {
    CMatrix s0(2, 2), s1(2, 2), s2(2, 2), s3(2, 2);
    s0 << 1.0, 0.0, 0.0, 1.0;
    s1 << 0.0, 1.0, 1.0, 0.0;
    s2 << 0.0, -kI, kI, 0.0;
    s3 << 1.0, 0.0, 0.0, -1.0;
    return std::array<Operator, 4>{Operator(s0), Operator(s1), Operator(s2),
                                   Operator(s3)};
  }();
  if (index < 0 || index > 3) throw InvalidInput("pauli: index out of range");
  return table[static_cast<std::size_t>(index)];
}

Ket standard_ket(PolLabel label) {
  switch (label) {
    case PolLabel::H: return Ket(vec2(1.0, 0.0));
    case PolLabel::V: return Ket(vec2(0.0, 1.0));
    case PolLabel::P: return Ket(vec2(kInvSqrt2, kInvSqrt2));
    case PolLabel::M: return Ket(vec2(kInvSqrt2, -kInvSqrt2));
    case PolLabel::R: return Ket(vec2(kInvSqrt2, kI * kInvSqrt2));
    case PolLabel::L: return Ket(vec2(kInvSqrt2, -kI * kInvSqrt2));
  }
  throw InvalidInput("standard_ket: unknown label");
}

Ket bell_ket(BellState bell) {
  const double s = kInvSqrt2;
  switch (bell) {
    case BellState::PsiMinus: return Ket(vec4(0.0, s, -s, 0.0));
    case BellState::PsiPlus: return Ket(vec4(0.0, s, s, 0.0));
    case BellState::PhiMinus: return Ket(vec4(s, 0.0, 0.0, -s));
    case BellState::PhiPlus: return Ket(vec4(s, 0.0, 0.0, s));
  }
  throw InvalidInput("bell_ket: unknown Bell state");
}

std::array<Ket, 2> basis_kets(Basis basis) {
  switch (basis) {
    case Basis::HV: return {standard_ket(PolLabel::H), standard_ket(PolLabel::V)};
    case Basis::PM: return {standard_ket(PolLabel::P), standard_ket(PolLabel::M)};
    case Basis::RL: return {standard_ket(PolLabel::R), standard_ket(PolLabel::L)};
  }
  throw InvalidInput("basis_kets: unknown basis");
}

Ket tensor(const Ket& a, const Ket& b) {
  return Ket(CVector(Eigen::kroneckerProduct(a.amplitudes(), b.amplitudes())));
}

DensityMatrix tensor(const DensityMatrix& a, const DensityMatrix& b) {
  return DensityMatrix(CMatrix(Eigen::kroneckerProduct(a.matrix(), b.matrix())));
}

Operator tensor(const Operator& a, const Operator& b) {
  return Operator(CMatrix(Eigen::kroneckerProduct(a.matrix(), b.matrix())));
}

DensityMatrix apply(const Operator& u, const DensityMatrix& rho) {
  if (u.dim() != rho.dim()) throw InvalidInput("apply: dimension mismatch");
  if (!u.is_unitary()) throw InvalidInput("apply: operator is not unitary");
  return DensityMatrix(u.matrix() * rho.matrix() * u.matrix().adjoint());
}

double fidelity_pure(const DensityMatrix& rho, const Ket& phi) {
  if (rho.dim() != phi.dim()) {
    throw InvalidInput("fidelity_pure: dimension mismatch");
  }
  const Complex f = phi.amplitudes().dot(rho.matrix() * phi.amplitudes());
  if (std::abs(f.imag()) > kHermitianTolerance) {
    throw InvalidInput("fidelity_pure: non-real overlap");
  }
  return std::clamp(f.real(), 0.0, 1.0);
}

DensityMatrix partial_trace(const DensityMatrix& rho, Subsystem keep) {
  if (rho.dim() != 4) throw InvalidInput("partial_trace: expected dimension 4");
  CMatrix out = CMatrix::Zero(2, 2);
  const CMatrix& m = rho.matrix();
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      for (int k = 0; k < 2; ++k) {
        if (keep == Subsystem::First) {
          out(i, j) += m(2 * i + k, 2 * j + k);
        } else {
          out(i, j) += m(2 * k + i, 2 * k + j);
        }
      }
    }
  }
  return DensityMatrix(out);
}

BellProjection project_bell(const DensityMatrix& rho123, BellState bell) {
  if (rho123.dim() != 8) throw InvalidInput("project_bell: expected dimension 8");
  const CVector b = bell_ket(bell).amplitudes();
  const CMatrix& m = rho123.matrix();

  // (<b|_12 (x) I_3) rho (|b>_12 (x) I_3), a 2x2 block in photon 3's space.
  CMatrix reduced = CMatrix::Zero(2, 2);
  for (int x = 0; x < 4; ++x) {
    for (int y = 0; y < 4; ++y) {
      const Complex w = std::conj(b(x)) * b(y);
      if (w == Complex(0.0, 0.0)) continue;
      reduced += w * m.block(2 * x, 2 * y, 2, 2);
    }
  }
  BellProjection result;
  result.probability = std::max(0.0, reduced.trace().real());
  if (result.probability >= 1e-15) {
    result.post_state = DensityMatrix(reduced / result.probability);
  }
  return result;
}

}  // namespace qtele
