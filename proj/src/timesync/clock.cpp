#include <cmath>
#include <random>

#include "qtele/errors.hpp"
#include "qtele/timesync.hpp"

namespace qtele {

void ClockModel::validate() const {
  if (!(drift_bound_ps >= 0.0) || !(drift_epoch_s > 0.0)) {
    throw ConfigError("ClockModel: drift bound must be >= 0 and epoch > 0");
  }
  if (!(random_walk_sigma >= 0.0)) {
    throw ConfigError("ClockModel: random_walk_sigma must be >= 0");
  }
  if (std::abs(initial_drift_rate_ps_per_s) > max_rate_ps_per_s()) {
    throw ConfigError("ClockModel: initial drift rate exceeds the drift bound");
  }
}

ClockTrajectory::ClockTrajectory(const ClockModel& model, double duration_s,
                                 std::uint64_t seed) {
  model.validate();
  const auto steps = static_cast<std::size_t>(std::ceil(std::max(duration_s, 0.0))) + 1;
  offsets_.resize(steps + 1);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double bound = model.max_rate_ps_per_s();

  double offset = static_cast<double>(model.initial_offset_ps);
  double rate = model.initial_drift_rate_ps_per_s;
  offsets_[0] = offset;
  for (std::size_t k = 1; k < offsets_.size(); ++k) {
    rate += model.random_walk_sigma * gauss(rng);
    // Reflect into [-bound, bound]; repeated in case of a very large step.
    while (rate > bound || rate < -bound) {
      if (rate > bound) rate = 2.0 * bound - rate;
      if (rate < -bound) rate = -2.0 * bound - rate;
    }
    offset += rate;
    offsets_[k] = offset;
  }
}

double ClockTrajectory::offset_ps(double t_s) const {
  if (t_s <= 0.0) return offsets_.front();
  const double last = static_cast<double>(offsets_.size() - 1);
  if (t_s >= last) return offsets_.back();
  const auto k = static_cast<std::size_t>(t_s);
  const double frac = t_s - static_cast<double>(k);
  return offsets_[k] + frac * (offsets_[k + 1] - offsets_[k]);
}

}  // namespace qtele
