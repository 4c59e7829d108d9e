// Single-qubit state tomography, analytic process tomography and Poissonian
// Monte Carlo error bars.

#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "json.hpp"
#include "qtele/qcore.hpp"

namespace qtele {

struct CountRecord {
  Basis basis = Basis::HV;
  std::uint64_t n_first = 0;
  std::uint64_t n_second = 0;

  std::uint64_t total() const { return n_first + n_second; }
};

/// rho = (I + sum_i s_i sigma_i) / 2 with s_i the empirical expectation per
/// basis. Records sharing a basis are pooled. May be non-PSD. Throws
/// InvalidInput when a basis has no counts.
CMatrix linear_inversion(std::span<const CountRecord> counts);

/// Nearest PSD, unit-trace matrix by eigenvalue clipping at `floor`.
DensityMatrix project_psd(const CMatrix& m, double floor = 0.0);

/// Real parameters (t1, t2, t3, t4) of T = [[t1, 0], [t3 + i t4, t2]];
/// rho = T^dagger T / tr(T^dagger T).
using TParams = std::array<double, 4>;

DensityMatrix rho_from_params(const TParams& t);
TParams params_from_rho(const DensityMatrix& rho);

/// Multinomial log-likelihood sum n_j ln p_j (terms with n_j = 0 skipped).
double log_likelihood(const DensityMatrix& rho, std::span<const CountRecord> counts);
double log_likelihood(const TParams& t, std::span<const CountRecord> counts);
TParams log_likelihood_gradient(const TParams& t, std::span<const CountRecord> counts);

struct MleOptions {
  double relative_tolerance = 1e-10;
  int max_iterations = 10000;
};

struct TomoResult {
  DensityMatrix rho = DensityMatrix::maximally_mixed(2);
  double log_likelihood = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Maximum-likelihood state over physical density matrices. Bases without
/// counts are allowed as long as some basis has counts.
TomoResult mle_reconstruct(std::span<const CountRecord> counts, const MleOptions& options = {});

double state_fidelity(const DensityMatrix& rho, const Ket& ideal);

// ---------------------------------------------------------------------------
// Process tomography

struct ProcessMatrix {
  /// 4x4 in the Pauli basis (sigma_0..sigma_3).
  CMatrix chi;
};

struct StatePair {
  Ket input;
  DensityMatrix output;
};

struct ProcessOptions {
  /// Clip negative eigenvalues of chi and renormalize. Off by default.
  bool project_cp = false;
};

/// chi from the outputs of the inputs {H, V, P, L} (any order, any global
/// phase). Throws InvalidInput for any other input set.
ProcessMatrix process_from_states(std::span<const StatePair> pairs,
                                  const ProcessOptions& options = {});

double process_fidelity(const ProcessMatrix& chi);

/// sum_lk chi_lk sigma_l rho sigma_k.
CMatrix apply_process(const ProcessMatrix& chi, const CMatrix& rho);

// ---------------------------------------------------------------------------
// Error estimates

struct FidelityEstimate {
  double value = 0.0;
  double sigma = 0.0;
  int n_resamples = 0;
};

/// Fidelity of the MLE state with the sample standard deviation over
/// Poisson-resampled count sets.
FidelityEstimate monte_carlo_sigma(std::span<const CountRecord> counts, const Ket& ideal,
                                   int n_resamples = 1000, std::uint64_t seed = 0);

/// Fidelity measured in the eigenbasis of the ideal state only:
/// n_match / (n_match + n_mismatch), with the same Poisson resampling.
FidelityEstimate eigenbasis_fidelity(std::uint64_t n_match, std::uint64_t n_mismatch,
                                     int n_resamples = 1000, std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// I/O

/// CSV with header "basis,n_first,n_second".
std::vector<CountRecord> read_counts_csv(std::istream& in);
void write_counts_csv(std::ostream& out, std::span<const CountRecord> counts);

/// Matrix as rows of [re, im] pairs.
nlohmann::ordered_json matrix_to_json(const CMatrix& m);
CMatrix matrix_from_json(const nlohmann::json& j);

}  // namespace qtele
