#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "qtele/errors.hpp"
#include "qtele/photonics_sim.hpp"

namespace qtele {

LossModel parse_loss_model(std::string_view text) {
  if (text == "constant") return LossModel::Constant;
  if (text == "ou") return LossModel::OrnsteinUhlenbeck;
  throw ConfigError("unknown loss model '" + std::string(text) + "'");
}

std::string_view to_string(LossModel model) {
  return model == LossModel::Constant ? "constant" : "ou";
}

AttenuationProcess::AttenuationProcess(double mean_db, const LossFluctuation& fluctuation,
                                       double duration_s, std::uint64_t seed)
    : mean_db_(mean_db),
      min_db_(mean_db - fluctuation.amplitude_db),
      max_db_(mean_db + fluctuation.amplitude_db) {
  if (fluctuation.amplitude_db < 0.0) {
    throw ConfigError("loss fluctuation amplitude must be >= 0");
  }
  if (fluctuation.model == LossModel::Constant || fluctuation.amplitude_db == 0.0) {
    min_db_ = max_db_ = mean_db;
    samples_ = {mean_db};
    return;
  }
  if (!(fluctuation.correlation_time_s > 0.0)) {
    throw ConfigError("loss fluctuation correlation time must be > 0");
  }

  const double tau = fluctuation.correlation_time_s;
  step_s_ = std::min(1.0, tau / 20.0);
  const auto n = static_cast<std::size_t>(std::ceil(std::max(duration_s, 0.0) / step_s_)) + 2;
  samples_.resize(n);

  const double sigma = fluctuation.amplitude_db / 2.0;
  const double decay = std::exp(-step_s_ / tau);
  const double kick = sigma * std::sqrt(1.0 - decay * decay);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  double x = sigma * gauss(rng);
  for (std::size_t k = 0; k < n; ++k) {
    samples_[k] = std::clamp(mean_db + x, min_db_, max_db_);
    x = decay * x + kick * gauss(rng);
  }
}

double AttenuationProcess::loss_db(double t_s) const {
  if (samples_.size() == 1) return samples_.front();
  const double pos = std::max(t_s, 0.0) / step_s_;
  const auto k = static_cast<std::size_t>(pos);
  if (k + 1 >= samples_.size()) return samples_.back();
  const double frac = pos - static_cast<double>(k);
  return samples_[k] + frac * (samples_[k + 1] - samples_[k]);
}

double AttenuationProcess::transmission(double t_s) const {
  return std::pow(10.0, -loss_db(t_s) / 10.0);
}

double attenuation_process(const AttenuationProcess& process, double t_s) {
  return process.loss_db(t_s);
}

}  // namespace qtele
