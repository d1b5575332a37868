#pragma once

#include <stdexcept>
#include <string>

namespace mfmpc {

/// Malformed or inconsistent input data (CSV rows, price values, model files).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid run configuration or command-line arguments.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A planning problem could not be solved to the requested accuracy, or was
/// infeasible where feasibility is required.
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mfmpc
