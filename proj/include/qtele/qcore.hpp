// Small-dimension complex linear algebra for polarization qubits.
//
// Basis ordering is fixed everywhere: {H, V} for one photon and
// {HH, HV, VH, VV} for two, left factor as the slow index.

#pragma once

#include <Eigen/Dense>

#include <array>
#include <complex>
#include <optional>
#include <string_view>

namespace qtele {

using Complex = std::complex<double>;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;

inline constexpr double kNormTolerance = 1e-12;
inline constexpr double kHermitianTolerance = 1e-12;
inline constexpr double kPsdTolerance = 1e-9;

enum class PolLabel { H, V, P, M, R, L };

PolLabel parse_pol_label(std::string_view text);
std::string_view to_string(PolLabel label);

/// Measurement bases used for analysis. The first listed ket is outcome 0.
enum class Basis { HV, PM, RL };

Basis parse_basis(std::string_view text);
std::string_view to_string(Basis basis);

/// Basis in which `label` is an eigenstate.
Basis eigenbasis_of(PolLabel label);

enum class BellState { PsiMinus, PsiPlus, PhiMinus, PhiPlus };

inline constexpr std::array<BellState, 4> kAllBellStates = {
    BellState::PsiMinus, BellState::PsiPlus, BellState::PhiMinus,
    BellState::PhiPlus};

BellState parse_bell_state(std::string_view text);
std::string_view to_string(BellState bell);

/// Normalized state vector.
class Ket {
 public:
  explicit Ket(CVector amplitudes);

  int dim() const { return static_cast<int>(amps_.size()); }
  const CVector& amplitudes() const { return amps_; }
  Complex operator[](int i) const { return amps_(i); }

 private:
  CVector amps_;
};

/// Hermitian, unit-trace, positive semidefinite matrix.
class DensityMatrix {
 public:
  explicit DensityMatrix(const CMatrix& entries);

  static DensityMatrix from_ket(const Ket& ket);
  static DensityMatrix maximally_mixed(int dim);

  int dim() const { return static_cast<int>(rho_.rows()); }
  const CMatrix& matrix() const { return rho_; }
  Complex operator()(int r, int c) const { return rho_(r, c); }

  /// Eigenvalues in ascending order.
  Eigen::VectorXd eigenvalues() const;

 private:
  CMatrix rho_;
};

/// Square operator; unitarity is checked once at construction.
class Operator {
 public:
  explicit Operator(CMatrix entries);

  int dim() const { return static_cast<int>(m_.rows()); }
  const CMatrix& matrix() const { return m_; }
  bool is_unitary() const { return unitary_; }

 private:
  CMatrix m_;
  bool unitary_;
};

/// Pauli matrices: 0 identity, 1 x, 2 y, 3 z.
const Operator& pauli(int index);
inline const Operator& sigma_x() { return pauli(1); }
inline const Operator& sigma_y() { return pauli(2); }
inline const Operator& sigma_z() { return pauli(3); }

Ket standard_ket(PolLabel label);
Ket bell_ket(BellState bell);

/// The two kets of `basis`, outcome 0 first.
std::array<Ket, 2> basis_kets(Basis basis);

Ket tensor(const Ket& a, const Ket& b);
DensityMatrix tensor(const DensityMatrix& a, const DensityMatrix& b);
Operator tensor(const Operator& a, const Operator& b);

/// U rho U^dagger. U must be unitary and match rho's dimension.
DensityMatrix apply(const Operator& u, const DensityMatrix& rho);

/// <phi|rho|phi>.
double fidelity_pure(const DensityMatrix& rho, const Ket& phi);

enum class Subsystem { First, Second };

/// Reduced state of a two-qubit density matrix, keeping `keep`.
DensityMatrix partial_trace(const DensityMatrix& rho, Subsystem keep);

struct BellProjection {
  double probability = 0.0;
  /// Empty when the probability is below 1e-15.
  std::optional<DensityMatrix> post_state;
};

/// Projects photons 1 and 2 of a three-photon state (dim 8, photon order
/// 1,2,3) onto `bell` and returns the conditional state of photon 3.
BellProjection project_bell(const DensityMatrix& rho123, BellState bell);

}  // namespace qtele
