#pragma once

#include "mfmpc/price_data.hpp"
#include "mfmpc/scenarios.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mfmpc {

constexpr int kArWindow = 24;  // residual lags fed to the AR model
constexpr int kLeads = 23;     // hours predicted ahead
constexpr int kFourierPeriods = 16;
constexpr int kBaselineParams = 1 + 2 * kFourierPeriods;

/// Periods in hours: daily 24/k, weekly 168/k, yearly 8760/k for k = 1..4,
/// then 168 + 24, 168 - 24, 8760 + 24, 8760 - 24.
[[nodiscard]] const std::array<double, kFourierPeriods>& baseline_periods();

/// [1, cos(2 pi t / T_1), sin(2 pi t / T_1), ..., cos(.. T_16), sin(.. T_16)].
[[nodiscard]] Eigen::VectorXd fourier_features(double t);

/// Seasonal baseline b_t of the double-log price, t in hours from the model
/// origin.
struct BaselineModel {
  double intercept = 0.0;
  Eigen::VectorXd cos_coeffs = Eigen::VectorXd::Zero(kFourierPeriods);
  Eigen::VectorXd sin_coeffs = Eigen::VectorXd::Zero(kFourierPeriods);
  double residual_rms = 0.0;  // on the data it was fitted to

  [[nodiscard]] double value(double t) const;
  [[nodiscard]] Eigen::VectorXd coefficients() const;  // feature order
};

/// Ridge fit of z_t on fourier_features(t), t = 0..n-1. The intercept is not
/// penalized.
[[nodiscard]] BaselineModel fit_baseline(std::span<const double> z, double ridge_lambda);

/// Maps the last 24 residuals (oldest first) to the next 23.
struct ArModel {
  Eigen::MatrixXd gamma = Eigen::MatrixXd::Zero(kLeads, kArWindow);

  [[nodiscard]] Eigen::VectorXd predict(const Eigen::VectorXd& window) const { return gamma * window; }
};

/// Row j of gamma regresses r_{t+j+1} on (r_{t-23}, ..., r_t) over every t
/// with a full window and a full 23-hour future.
[[nodiscard]] ArModel fit_ar(std::span<const double> residuals, double ridge_lambda);

/// Per hour-of-week mean and covariance of the 23-vector of AR forecast
/// errors in the double-log domain.
struct ErrorModel {
  std::vector<Eigen::VectorXd> means;        // kHoursPerWeek entries
  std::vector<Eigen::MatrixXd> covariances;  // kHoursPerWeek entries
  double smoothing = 0.0;

  void validate() const;
};

constexpr double kCovarianceFloor = 1e-8;

/// `errors` holds one 23-vector per row; `strata[i]` is the hour of week of
/// the forecast origin of row i. Empirical means; covariances are the
/// per-stratum maximum-likelihood estimates smoothed over the cycle graph of
/// hours of the week with weight `smoothing`, then floored at
/// kCovarianceFloor. Throws DataError if a stratum has no rows.
[[nodiscard]] ErrorModel fit_error_model(const Eigen::MatrixXd& errors, std::span<const int> strata,
                                         double smoothing);

/// Sum over neighbouring hours of the week of the Frobenius distance between
/// their covariances.
[[nodiscard]] double covariance_roughness(const ErrorModel& model);

/// The fitted forecaster. Hour indices t count hours from `origin_hour`, the
/// first training hour.
struct ForecastModel {
  std::int64_t origin_hour = 0;
  double clip_level = 0.0;  // winsorization level of the training prices
  BaselineModel baseline;
  ArModel ar;
  ErrorModel errors;

  [[nodiscard]] int stratum(std::int64_t t) const { return hour_of_week(origin_hour + t); }
};

struct ForecastSettings {
  std::optional<double> baseline_ridge;  // default 1e-3 * sample count
  std::optional<double> ar_ridge;        // default 1e-3 * pair count
  double smoothing = 10.0;
};

/// Residuals r_t = z_t - b_t of a price window whose first hour has index
/// `first_t`.
[[nodiscard]] std::vector<double> residuals(const BaselineModel& baseline, std::span<const double> prices,
                                            std::int64_t first_t);

/// Forecast errors z_tau - (b_tau + Gamma_{tau-t} window_t) at every t of
/// `z` with 24 hours of history and 23 of future. Row i belongs to t = 23 + i.
[[nodiscard]] Eigen::MatrixXd forecast_errors(const BaselineModel& baseline, const ArModel& ar,
                                              std::span<const double> z);

/// Fits baseline, AR and error model to winsorized training prices.
[[nodiscard]] ForecastModel fit_forecast(const PriceSeries& train, double clip_level,
                                         const ForecastSettings& settings = {});

/// Prices for hours t+1..t+23 from the residual window ending at t.
[[nodiscard]] Eigen::VectorXd point_forecast(const ForecastModel& model, std::int64_t t,
                                             const Eigen::VectorXd& window);

/// S price paths of length 24: column 0 is `current_price`, columns 1..23
/// are expexp(b + Gamma window + e) with e ~ N(mu_m, Sigma_m), m the hour of
/// week of t. Scenarios are drawn one after another from a single stream
/// seeded with `seed`, so the first k of S scenarios equal a k-scenario draw.
[[nodiscard]] ScenarioSet sample_scenarios(const ForecastModel& model, std::int64_t t, const Eigen::VectorXd& window,
                                           double current_price, int count, std::uint64_t seed);

/// RMS of log(actual) - log(forecast) over all entries.
[[nodiscard]] double rms_log_error(const Eigen::MatrixXd& forecasts, const Eigen::MatrixXd& actual);
/// The same per column (lead time).
[[nodiscard]] Eigen::VectorXd rms_log_error_by_lead(const Eigen::MatrixXd& forecasts, const Eigen::MatrixXd& actual);

struct ForecastEvaluation {
  std::size_t hours = 0;          // hours scored by the baseline
  std::size_t origins = 0;        // forecast origins scored
  double baseline_rms = 0.0;      // RMS of log p - exp(b)
  double forecast_rms = 0.0;      // RMS log-price error over all leads
  Eigen::VectorXd rms_by_lead;    // leads 1..23
};

/// Scores the baseline on hours [begin, end) of `prices` and the point
/// forecast from every origin in that range with 23 hours of history and 23
/// of future. `first_t` is the model hour index of prices[0].
[[nodiscard]] ForecastEvaluation evaluate_forecast(const ForecastModel& model, std::span<const double> prices,
                                                   std::int64_t first_t, std::size_t begin, std::size_t end);

[[nodiscard]] std::string model_to_json(const ForecastModel& model);
[[nodiscard]] ForecastModel model_from_json(const std::string& text);
void save_model(const std::filesystem::path& path, const ForecastModel& model);
[[nodiscard]] ForecastModel load_model(const std::filesystem::path& path);

}  // namespace mfmpc
