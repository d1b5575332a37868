#include "mfmpc/scenarios.hpp"

#include <stdexcept>

namespace mfmpc {

ScenarioSet ScenarioSet::uniform(Eigen::MatrixXd prices) {
  ScenarioSet set;
  set.weights = Eigen::VectorXd::Ones(prices.rows());
  set.prices = std::move(prices);
  return set;
}

ScenarioSet ScenarioSet::prefix(int count) const {
  if (count < 1 || count > size()) throw std::invalid_argument("scenario prefix out of range");
  ScenarioSet out;
  out.prices = prices.topRows(count);
  out.weights = weights.head(count);
  return out;
}

void ScenarioSet::validate() const {
  if (size() < 1 || horizon() < 1) throw std::invalid_argument("scenario set is empty");
  if (weights.size() != size()) throw std::invalid_argument("one weight per scenario is required");
  if (!prices.allFinite() || (prices.array() <= 0.0).any()) {
    throw std::invalid_argument("scenario prices must be finite and positive");
  }
  if (!weights.allFinite() || (weights.array() <= 0.0).any()) {
    throw std::invalid_argument("scenario weights must be positive");
  }
  if ((prices.col(0).array() != prices(0, 0)).any()) {
    throw std::invalid_argument("all scenarios must share the current price");
  }
}

}  // namespace mfmpc
