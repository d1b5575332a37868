#pragma once

#include <Eigen/Dense>

namespace mfmpc {

/// S price paths over a planning horizon. Column 0 holds the known current
/// price (the anchor) for every scenario; columns 1.. are forecasts.
struct ScenarioSet {
  Eigen::MatrixXd prices;   // S x H
  Eigen::VectorXd weights;  // S, positive

  [[nodiscard]] int size() const { return static_cast<int>(prices.rows()); }
  [[nodiscard]] int horizon() const { return static_cast<int>(prices.cols()); }
  [[nodiscard]] double anchor() const { return prices(0, 0); }

  /// Unit weights.
  static ScenarioSet uniform(Eigen::MatrixXd prices);

  /// The first `count` scenarios, in order.
  [[nodiscard]] ScenarioSet prefix(int count) const;

  /// Throws std::invalid_argument on nonpositive prices or weights, or when
  /// the scenarios disagree on the anchor price.
  void validate() const;
};

}  // namespace mfmpc
