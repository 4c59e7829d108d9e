#include <cmath>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <string>

#include "qtele/errors.hpp"
#include "qtele/rng.hpp"
#include "qtele/tomography.hpp"

namespace qtele {

namespace {

double sample_std(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

std::uint64_t poisson(Rng& rng, std::uint64_t mean) {
  if (mean == 0) return 0;
  std::poisson_distribution<std::uint64_t> d(static_cast<double>(mean));
  return d(rng);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::uint64_t parse_count(const std::string& field, int line_no) {
  const std::string f = trim(field);
  if (f.empty() || f.find_first_not_of("0123456789") != std::string::npos) {
    throw InvalidInput("counts csv line " + std::to_string(line_no) + ": bad count '" + f + "'");
  }
  return std::stoull(f);
}

}  // namespace

FidelityEstimate monte_carlo_sigma(std::span<const CountRecord> counts, const Ket& ideal,
                                   int n_resamples, std::uint64_t seed) {
  if (n_resamples < 0) throw InvalidInput("monte_carlo_sigma: n_resamples must be >= 0");
  FidelityEstimate est;
  est.value = state_fidelity(mle_reconstruct(counts).rho, ideal);
  est.n_resamples = n_resamples;

  std::vector<double> samples;
  samples.reserve(static_cast<std::size_t>(n_resamples));
  std::vector<CountRecord> resampled(counts.begin(), counts.end());
  for (int r = 0; r < n_resamples; ++r) {
    Rng rng = make_rng(seed, StreamTag::MonteCarlo, static_cast<std::uint64_t>(r));
    std::uint64_t total = 0;
    // An all-zero draw has no likelihood; redraw from the same stream.
    while (total == 0) {
      for (std::size_t i = 0; i < counts.size(); ++i) {
        resampled[i].n_first = poisson(rng, counts[i].n_first);
        resampled[i].n_second = poisson(rng, counts[i].n_second);
        total += resampled[i].total();
      }
    }
    samples.push_back(state_fidelity(mle_reconstruct(resampled).rho, ideal));
  }
  est.sigma = sample_std(samples);
  return est;
}

FidelityEstimate eigenbasis_fidelity(std::uint64_t n_match, std::uint64_t n_mismatch,
                                     int n_resamples, std::uint64_t seed) {
  if (n_match + n_mismatch == 0) throw InvalidInput("eigenbasis_fidelity: no counts");
  if (n_resamples < 0) throw InvalidInput("eigenbasis_fidelity: n_resamples must be >= 0");
  FidelityEstimate est;
  est.value = static_cast<double>(n_match) / static_cast<double>(n_match + n_mismatch);
  est.n_resamples = n_resamples;
  std::vector<double> samples;
  samples.reserve(static_cast<std::size_t>(n_resamples));
  for (int r = 0; r < n_resamples; ++r) {
    Rng rng = make_rng(seed, StreamTag::MonteCarlo, static_cast<std::uint64_t>(r));
    std::uint64_t m = 0, x = 0;
    while (m + x == 0) {
      m = poisson(rng, n_match);
      x = poisson(rng, n_mismatch);
    }
    samples.push_back(static_cast<double>(m) / static_cast<double>(m + x));
  }
  est.sigma = sample_std(samples);
  return est;
}

std::vector<CountRecord> read_counts_csv(std::istream& in) {
  std::vector<CountRecord> out;
  std::string line;
  int line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (!header_seen) {
      header_seen = true;
      if (fields.size() == 3 && trim(fields[0]) == "basis" && trim(fields[1]) == "n_first" &&
          trim(fields[2]) == "n_second") {
        continue;
      }
      throw InvalidInput("counts csv: expected header 'basis,n_first,n_second'");
    }
    if (fields.size() != 3) {
      throw InvalidInput("counts csv line " + std::to_string(line_no) + ": expected 3 fields");
    }
    CountRecord r;
    r.basis = parse_basis(trim(fields[0]));
    r.n_first = parse_count(fields[1], line_no);
    r.n_second = parse_count(fields[2], line_no);
    out.push_back(r);
  }
  if (!header_seen) throw InvalidInput("counts csv: empty input");
  return out;
}

void write_counts_csv(std::ostream& out, std::span<const CountRecord> counts) {
  out << "basis,n_first,n_second\n";
  for (const CountRecord& r : counts) {
    out << to_string(r.basis) << ',' << r.n_first << ',' << r.n_second << '\n';
  }
}

nlohmann::ordered_json matrix_to_json(const CMatrix& m) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::ordered_json row = nlohmann::ordered_json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back({m(r, c).real(), m(r, c).imag()});
    rows.push_back(row);
  }
  return rows;
}

CMatrix matrix_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.empty()) throw InvalidInput("matrix json: expected non-empty array of rows");
  const auto n_rows = static_cast<Eigen::Index>(j.size());
  const auto n_cols = static_cast<Eigen::Index>(j[0].size());
  CMatrix m(n_rows, n_cols);
  for (Eigen::Index r = 0; r < n_rows; ++r) {
    const auto& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != n_cols) {
      throw InvalidInput("matrix json: ragged rows");
    }
    for (Eigen::Index c = 0; c < n_cols; ++c) {
      const auto& e = row[static_cast<std::size_t>(c)];
      if (!e.is_array() || e.size() != 2 || !e[0].is_number() || !e[1].is_number()) {
        throw InvalidInput("matrix json: entries must be [re, im]");
      }
      m(r, c) = Complex(e[0].get<double>(), e[1].get<double>());
    }
  }
  return m;
}

}  // namespace qtele
