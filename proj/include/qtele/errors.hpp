#pragma once

#include <stdexcept>
#include <string>

namespace qtele {

/// Input that violates a documented precondition (bad label, wrong dimension,
/// non-physical matrix, malformed file).
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Scenario or simulation configuration that cannot be run.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Clock synchronization could not recover an offset for too many epochs.
class SyncFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace qtele
