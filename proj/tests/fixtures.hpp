#pragma once

// Synthetic inputs for the forecast fits, built without the library's own
// feature or period code.

#include "mfmpc/forecast.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

namespace fixtures {

using mfmpc::kHoursPerWeek;
using mfmpc::kLeads;

// Period list written out independently of the library.
inline constexpr double kPeriods[16] = {24, 12, 8, 6, 168, 84, 56, 42, 8760, 4380, 2920, 2190, 192, 144, 8784, 8736};

inline Eigen::MatrixXd design(int n) {
  Eigen::MatrixXd X(n, 33);
  for (int t = 0; t < n; ++t) {
    X(t, 0) = 1.0;
    for (int i = 0; i < 16; ++i) {
      X(t, 1 + 2 * i) = std::cos(2 * std::numbers::pi * t / kPeriods[i]);
      X(t, 2 + 2 * i) = std::sin(2 * std::numbers::pi * t / kPeriods[i]);
    }
  }
  return X;
}

inline std::vector<double> ar1_series(std::mt19937_64& rng, int n, double phi, double sigma) {
  std::normal_distribution<double> noise(0.0, sigma);
  std::vector<double> r(static_cast<std::size_t>(n));
  double x = 0.0;
  for (int burn = 0; burn < 200; ++burn) x = phi * x + noise(rng);
  for (auto& v : r) {
    x = phi * x + noise(rng);
    v = x;
  }
  return r;
}

struct StratifiedSample {
  Eigen::MatrixXd errors;
  std::vector<int> strata;
};

// `per_stratum` rows per hour of week; the scale of the errors drifts
// around the week so strata differ.
inline StratifiedSample stratified_sample(std::mt19937_64& rng, int per_stratum, bool identity = false) {
  std::normal_distribution<double> normal;
  StratifiedSample s;
  s.errors.resize(per_stratum * kHoursPerWeek, kLeads);
  for (int i = 0; i < per_stratum * kHoursPerWeek; ++i) {
    const int m = (i * 37) % kHoursPerWeek;
    s.strata.push_back(m);
    const double scale = identity ? 1.0 : 0.2 + 0.1 * std::sin(2 * std::numbers::pi * m / kHoursPerWeek);
    double carry = 0.0;
    for (int j = 0; j < kLeads; ++j) {
      carry = identity ? normal(rng) : 0.6 * carry + normal(rng);
      s.errors(i, j) = scale * carry + (identity ? 0.0 : 0.01 * m / kHoursPerWeek);
    }
  }
  return s;
}

}  // namespace fixtures
