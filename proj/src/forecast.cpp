#include "mfmpc/forecast.hpp"

#include "mfmpc/error.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

namespace mfmpc {

namespace {

using nlohmann::json;

// argmin ||y - X theta||^2 + lambda ||theta[1..]||^2 with column 0 of X the
// constant feature when `intercept` is set, else lambda ||theta||^2. The
// intercept is eliminated by centering; the rest is an augmented
// least-squares problem solved with a rank-revealing factorization, which
// returns the minimum-norm solution when short windows make the slow
// Fourier columns collinear.
Eigen::MatrixXd ridge(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, double lambda, bool intercept) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw std::invalid_argument("ridge penalty must be nonnegative");
  const Eigen::Index n = X.rows();
  const Eigen::Index first = intercept ? 1 : 0;
  const Eigen::Index p = X.cols() - first;
  Eigen::MatrixXd Xa = Eigen::MatrixXd::Zero(n + p, p);
  Eigen::MatrixXd Ya = Eigen::MatrixXd::Zero(n + p, Y.cols());
  Eigen::RowVectorXd x_mean = Eigen::RowVectorXd::Zero(p);
  Eigen::RowVectorXd y_mean = Eigen::RowVectorXd::Zero(Y.cols());
  if (intercept) {
    x_mean = X.rightCols(p).colwise().mean();
    y_mean = Y.colwise().mean();
  }
  Xa.topRows(n) = X.rightCols(p).rowwise() - x_mean;
  Ya.topRows(n) = Y.rowwise() - y_mean;
  Xa.bottomRows(p).diagonal().setConstant(std::sqrt(lambda));
  const Eigen::MatrixXd slopes = Xa.completeOrthogonalDecomposition().solve(Ya);
  if (!intercept) return slopes;
  Eigen::MatrixXd theta(X.cols(), Y.cols());
  theta.row(0) = y_mean - x_mean * slopes;
  theta.bottomRows(p) = slopes;
  return theta;
}

Eigen::MatrixXd floor_eigenvalues(const Eigen::MatrixXd& sigma) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sigma);
  const Eigen::VectorXd values = eig.eigenvalues();
  // Aim slightly above the floor so rounding in the reconstruction cannot
  // push the smallest eigenvalue back under it.
  const double target = kCovarianceFloor + 64.0 * std::numeric_limits<double>::epsilon() * values.cwiseAbs().maxCoeff();
  if (values.minCoeff() >= target) return sigma;
  const Eigen::MatrixXd& V = eig.eigenvectors();
  return V * values.cwiseMax(target).asDiagonal() * V.transpose();
}

void symmetrize(Eigen::MatrixXd& m) { m = (0.5 * (m + m.transpose())).eval(); }

// Square-root factor L with L L' = sigma; eigen fallback when Cholesky fails.
Eigen::MatrixXd sampling_factor(const Eigen::MatrixXd& sigma) {
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() == Eigen::Success) {
    Eigen::MatrixXd L = llt.matrixL();
    if (L.allFinite()) return L;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sigma);
  return eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
}

std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd from_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

const std::array<double, kFourierPeriods>& baseline_periods() {
  static const std::array<double, kFourierPeriods> periods = [] {
    std::array<double, kFourierPeriods> p{};
    for (int k = 1; k <= 4; ++k) {
      p[static_cast<std::size_t>(k - 1)] = 24.0 / k;
      p[static_cast<std::size_t>(k + 3)] = 168.0 / k;
      p[static_cast<std::size_t>(k + 7)] = 8760.0 / k;
    }
    p[12] = 168.0 + 24.0;
    p[13] = 168.0 - 24.0;
    p[14] = 8760.0 + 24.0;
    p[15] = 8760.0 - 24.0;
    return p;
  }();
  return periods;
}

Eigen::VectorXd fourier_features(double t) {
  Eigen::VectorXd phi(kBaselineParams);
  phi[0] = 1.0;
  const auto& periods = baseline_periods();
  for (int i = 0; i < kFourierPeriods; ++i) {
    const double angle = 2.0 * std::numbers::pi * t / periods[static_cast<std::size_t>(i)];
    phi[1 + 2 * i] = std::cos(angle);
    phi[2 + 2 * i] = std::sin(angle);
  }
  return phi;
}

double BaselineModel::value(double t) const { return coefficients().dot(fourier_features(t)); }

Eigen::VectorXd BaselineModel::coefficients() const {
  Eigen::VectorXd theta(kBaselineParams);
  theta[0] = intercept;
  for (int i = 0; i < kFourierPeriods; ++i) {
    theta[1 + 2 * i] = cos_coeffs[i];
    theta[2 + 2 * i] = sin_coeffs[i];
  }
  return theta;
}

BaselineModel fit_baseline(std::span<const double> z, double ridge_lambda) {
  const auto n = static_cast<Eigen::Index>(z.size());
  if (n < kBaselineParams) throw DataError("baseline fit needs at least 33 hours");
  Eigen::MatrixXd X(n, kBaselineParams);
  for (Eigen::Index t = 0; t < n; ++t) X.row(t) = fourier_features(static_cast<double>(t)).transpose();
  const Eigen::Map<const Eigen::VectorXd> y(z.data(), n);
  const Eigen::VectorXd theta = ridge(X, y, ridge_lambda, true);

  BaselineModel m;
  m.intercept = theta[0];
  for (int i = 0; i < kFourierPeriods; ++i) {
    m.cos_coeffs[i] = theta[1 + 2 * i];
    m.sin_coeffs[i] = theta[2 + 2 * i];
  }
  m.residual_rms = std::sqrt((y - X * theta).squaredNorm() / static_cast<double>(n));
  return m;
}

ArModel fit_ar(std::span<const double> residuals, double ridge_lambda) {
  const auto n = static_cast<Eigen::Index>(residuals.size());
  const Eigen::Index pairs = n - kArWindow - kLeads + 1;
  if (pairs < 1) throw DataError("AR fit needs at least 47 residuals");
  Eigen::MatrixXd X(pairs, kArWindow);
  Eigen::MatrixXd Y(pairs, kLeads);
  for (Eigen::Index i = 0; i < pairs; ++i) {
    for (int j = 0; j < kArWindow; ++j) X(i, j) = residuals[static_cast<std::size_t>(i + j)];
    for (int j = 0; j < kLeads; ++j) Y(i, j) = residuals[static_cast<std::size_t>(i + kArWindow + j)];
  }
  ArModel m;
  m.gamma = ridge(X, Y, ridge_lambda, false).transpose();
  return m;
}

void ErrorModel::validate() const {
  if (means.size() != kHoursPerWeek || covariances.size() != kHoursPerWeek) {
    throw DataError("error model needs one mean and covariance per hour of the week");
  }
  for (int m = 0; m < kHoursPerWeek; ++m) {
    const auto& mu = means[static_cast<std::size_t>(m)];
    const auto& s = covariances[static_cast<std::size_t>(m)];
    if (mu.size() != kLeads || s.rows() != kLeads || s.cols() != kLeads || !mu.allFinite() || !s.allFinite()) {
      throw DataError("error model stratum " + std::to_string(m) + " has the wrong shape or non-finite entries");
    }
  }
  if (!(smoothing >= 0.0)) throw DataError("smoothing must be nonnegative");
}

ErrorModel fit_error_model(const Eigen::MatrixXd& errors, std::span<const int> strata, double smoothing) {
  if (static_cast<Eigen::Index>(strata.size()) != errors.rows()) throw std::invalid_argument("one stratum per row");
  if (errors.cols() != kLeads) throw std::invalid_argument("forecast errors must have 23 columns");
  if (!(smoothing >= 0.0) || !std::isfinite(smoothing)) throw std::invalid_argument("smoothing must be nonnegative");

  ErrorModel model;
  model.smoothing = smoothing;
  model.means.assign(kHoursPerWeek, Eigen::VectorXd::Zero(kLeads));
  std::vector<Eigen::MatrixXd> scatter(kHoursPerWeek, Eigen::MatrixXd::Zero(kLeads, kLeads));
  Eigen::VectorXd count = Eigen::VectorXd::Zero(kHoursPerWeek);
  for (Eigen::Index i = 0; i < errors.rows(); ++i) {
    const int m = strata[static_cast<std::size_t>(i)];
    if (m < 0 || m >= kHoursPerWeek) throw std::invalid_argument("stratum out of range");
    model.means[static_cast<std::size_t>(m)] += errors.row(i).transpose();
    count[m] += 1.0;
  }
  for (int m = 0; m < kHoursPerWeek; ++m) {
    if (count[m] == 0.0) throw DataError("no forecast errors for hour of week " + std::to_string(m));
    model.means[static_cast<std::size_t>(m)] /= count[m];
  }
  for (Eigen::Index i = 0; i < errors.rows(); ++i) {
    const auto m = static_cast<std::size_t>(strata[static_cast<std::size_t>(i)]);
    const Eigen::VectorXd d = errors.row(i).transpose() - model.means[m];
    scatter[m].selfadjointView<Eigen::Lower>().rankUpdate(d);
  }
  for (int m = 0; m < kHoursPerWeek; ++m) {
    auto& s = scatter[static_cast<std::size_t>(m)];
    s = s.selfadjointView<Eigen::Lower>();
    s /= count[m];
  }

  if (smoothing > 0.0) {
    // Fixed point of Sigma_m = (n_m S_m + g (Sigma_{m-1} + Sigma_{m+1})) / (n_m + 2 g),
    // i.e. (diag(n) + g L) Sigma = diag(n) S with L the cycle-graph Laplacian,
    // solved directly for all 23 x 23 entries at once.
    constexpr int N = kHoursPerWeek;
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(N, N);
    for (int m = 0; m < N; ++m) {
      M(m, m) = count[m] + 2.0 * smoothing;
      M(m, (m + 1) % N) -= smoothing;
      M(m, (m + N - 1) % N) -= smoothing;
    }
    Eigen::MatrixXd rhs(N, kLeads * kLeads);
    for (int m = 0; m < N; ++m) rhs.row(m) = count[m] * scatter[static_cast<std::size_t>(m)].reshaped().transpose();
    const Eigen::MatrixXd solved = M.llt().solve(rhs);
    for (int m = 0; m < N; ++m) {
      scatter[static_cast<std::size_t>(m)] = solved.row(m).reshaped(kLeads, kLeads);
    }
  }

  model.covariances.resize(kHoursPerWeek);
  for (int m = 0; m < kHoursPerWeek; ++m) {
    Eigen::MatrixXd s = scatter[static_cast<std::size_t>(m)];
    symmetrize(s);
    s = floor_eigenvalues(s);
    symmetrize(s);
    model.covariances[static_cast<std::size_t>(m)] = std::move(s);
  }
  return model;
}

double covariance_roughness(const ErrorModel& model) {
  double total = 0.0;
  for (int m = 0; m < kHoursPerWeek; ++m) {
    total += (model.covariances[static_cast<std::size_t>(m)] -
              model.covariances[static_cast<std::size_t>((m + 1) % kHoursPerWeek)])
                 .norm();
  }
  return total;
}

std::vector<double> residuals(const BaselineModel& baseline, std::span<const double> prices, std::int64_t first_t) {
  std::vector<double> r(prices.size());
  for (std::size_t i = 0; i < prices.size(); ++i) {
    r[i] = loglog(prices[i]) - baseline.value(static_cast<double>(first_t + static_cast<std::int64_t>(i)));
  }
  return r;
}

Eigen::MatrixXd forecast_errors(const BaselineModel& baseline, const ArModel& ar, std::span<const double> z) {
  const auto n = static_cast<Eigen::Index>(z.size());
  const Eigen::Index rows = n - kArWindow - kLeads + 1;
  if (rows < 1) throw DataError("forecast errors need at least 47 hours");
  Eigen::VectorXd b(n);
  for (Eigen::Index t = 0; t < n; ++t) b[t] = baseline.value(static_cast<double>(t));
  const Eigen::VectorXd r = Eigen::Map<const Eigen::VectorXd>(z.data(), n) - b;
  Eigen::MatrixXd e(rows, kLeads);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const Eigen::VectorXd predicted = ar.predict(r.segment(i, kArWindow));
    const Eigen::Index t = i + kArWindow - 1;
    e.row(i) = (r.segment(t + 1, kLeads) - predicted).transpose();
  }
  return e;
}

ForecastModel fit_forecast(const PriceSeries& train, double clip_level, const ForecastSettings& settings) {
  train.validate();
  const std::vector<double> z = loglog(train.prices);
  const auto n = static_cast<double>(z.size());
  ForecastModel model;
  model.origin_hour = train.hours.front();
  model.clip_level = clip_level;
  model.baseline = fit_baseline(z, settings.baseline_ridge.value_or(1e-3 * n));

  std::vector<double> r(z.size());
  for (std::size_t t = 0; t < z.size(); ++t) r[t] = z[t] - model.baseline.value(static_cast<double>(t));
  const double pairs = n - kArWindow - kLeads + 1;
  model.ar = fit_ar(r, settings.ar_ridge.value_or(1e-3 * std::max(pairs, 0.0)));

  const Eigen::MatrixXd e = forecast_errors(model.baseline, model.ar, z);
  std::vector<int> strata(static_cast<std::size_t>(e.rows()));
  for (std::size_t i = 0; i < strata.size(); ++i) strata[i] = train.hour_of_week[i + kArWindow - 1];
  model.errors = fit_error_model(e, strata, settings.smoothing);
  return model;
}

Eigen::VectorXd point_forecast(const ForecastModel& model, std::int64_t t, const Eigen::VectorXd& window) {
  if (window.size() != kArWindow) throw std::invalid_argument("residual window must hold 24 values");
  const Eigen::VectorXd r = model.ar.predict(window);
  Eigen::VectorXd p(kLeads);
  for (int j = 0; j < kLeads; ++j) p[j] = expexp(model.baseline.value(static_cast<double>(t + 1 + j)) + r[j]);
  return p;
}

ScenarioSet sample_scenarios(const ForecastModel& model, std::int64_t t, const Eigen::VectorXd& window,
                             double current_price, int count, std::uint64_t seed) {
  if (count < 1) throw std::invalid_argument("scenario count must be positive");
  if (window.size() != kArWindow) throw std::invalid_argument("residual window must hold 24 values");
  const auto m = static_cast<std::size_t>(model.stratum(t));
  const Eigen::MatrixXd L = sampling_factor(model.errors.covariances.at(m));
  const Eigen::VectorXd& mu = model.errors.means.at(m);

  Eigen::VectorXd center = model.ar.predict(window);
  for (int j = 0; j < kLeads; ++j) center[j] += model.baseline.value(static_cast<double>(t + 1 + j));

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd prices(count, kLeads + 1);
  Eigen::VectorXd xi(kLeads);
  for (int i = 0; i < count; ++i) {
    for (int j = 0; j < kLeads; ++j) xi[j] = normal(rng);
    const Eigen::VectorXd z = center + mu + L * xi;
    prices(i, 0) = current_price;
    for (int j = 0; j < kLeads; ++j) prices(i, j + 1) = expexp(z[j]);
  }
  return ScenarioSet::uniform(std::move(prices));
}

double rms_log_error(const Eigen::MatrixXd& forecasts, const Eigen::MatrixXd& actual) {
  if (forecasts.rows() != actual.rows() || forecasts.cols() != actual.cols() || forecasts.size() == 0) {
    throw std::invalid_argument("forecasts and actual prices must have the same nonempty shape");
  }
  const Eigen::ArrayXXd d = actual.array().log() - forecasts.array().log();
  return std::sqrt(d.square().mean());
}

Eigen::VectorXd rms_log_error_by_lead(const Eigen::MatrixXd& forecasts, const Eigen::MatrixXd& actual) {
  if (forecasts.rows() != actual.rows() || forecasts.cols() != actual.cols() || forecasts.size() == 0) {
    throw std::invalid_argument("forecasts and actual prices must have the same nonempty shape");
  }
  const Eigen::ArrayXXd d = actual.array().log() - forecasts.array().log();
  return (d.square().colwise().mean()).sqrt().transpose().matrix();
}

ForecastEvaluation evaluate_forecast(const ForecastModel& model, std::span<const double> prices,
                                     std::int64_t first_t, std::size_t begin, std::size_t end) {
  if (begin >= end || end > prices.size()) throw DataError("evaluation range is empty or exceeds the data");
  const std::vector<double> r = residuals(model.baseline, prices, first_t);

  ForecastEvaluation ev;
  double sq = 0.0;
  for (std::size_t i = begin; i < end; ++i) {
    const double b = model.baseline.value(static_cast<double>(first_t + static_cast<std::int64_t>(i)));
    const double d = std::log(prices[i]) - std::exp(b);
    sq += d * d;
  }
  ev.hours = end - begin;
  ev.baseline_rms = std::sqrt(sq / static_cast<double>(ev.hours));

  const std::size_t lo = std::max<std::size_t>(begin, kArWindow - 1);
  const std::size_t hi = end >= static_cast<std::size_t>(kLeads) ? end - kLeads : 0;
  if (lo >= hi) throw DataError("evaluation range is too short to score 23-hour forecasts");
  const auto rows = static_cast<Eigen::Index>(hi - lo);
  Eigen::MatrixXd forecasts(rows, kLeads);
  Eigen::MatrixXd actual(rows, kLeads);
  Eigen::VectorXd window(kArWindow);
  for (Eigen::Index k = 0; k < rows; ++k) {
    const std::size_t i = lo + static_cast<std::size_t>(k);
    for (int j = 0; j < kArWindow; ++j) window[j] = r[i + 1 + j - kArWindow];
    forecasts.row(k) = point_forecast(model, first_t + static_cast<std::int64_t>(i), window).transpose();
    for (int j = 0; j < kLeads; ++j) actual(k, j) = prices[i + 1 + j];
  }
  ev.origins = hi - lo;
  ev.forecast_rms = rms_log_error(forecasts, actual);
  ev.rms_by_lead = rms_log_error_by_lead(forecasts, actual);
  return ev;
}

std::string model_to_json(const ForecastModel& model) {
  json j;
  j["model_version"] = 1;
  j["origin"] = format_timestamp(model.origin_hour);
  j["clip_level"] = model.clip_level;
  const auto& periods = baseline_periods();
  j["baseline"] = {{"periods", std::vector<double>(periods.begin(), periods.end())},
                   {"intercept", model.baseline.intercept},
                   {"cos", to_vector(model.baseline.cos_coeffs)},
                   {"sin", to_vector(model.baseline.sin_coeffs)},
                   {"residual_rms", model.baseline.residual_rms}};
  std::vector<double> gamma;
  for (int r = 0; r < kLeads; ++r)
    for (int c = 0; c < kArWindow; ++c) gamma.push_back(model.ar.gamma(r, c));
  j["ar"] = {{"rows", kLeads}, {"cols", kArWindow}, {"gamma", gamma}};
  json strata = json::array();
  for (int m = 0; m < kHoursPerWeek; ++m) {
    const auto& s = model.errors.covariances[static_cast<std::size_t>(m)];
    std::vector<double> lower;
    for (int r = 0; r < kLeads; ++r)
      for (int c = 0; c <= r; ++c) lower.push_back(s(r, c));
    strata.push_back({{"hour_of_week", m},
                      {"mean", to_vector(model.errors.means[static_cast<std::size_t>(m)])},
                      {"covariance_lower", lower}});
  }
  j["errors"] = {{"smoothing", model.errors.smoothing}, {"strata", strata}};
  return j.dump(1);
}

ForecastModel model_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    if (j.at("model_version").get<int>() != 1) throw DataError("unsupported model_version");
    ForecastModel model;
    model.origin_hour = parse_timestamp(j.at("origin").get<std::string>());
    model.clip_level = j.at("clip_level").get<double>();

    const auto& b = j.at("baseline");
    const auto periods = b.at("periods").get<std::vector<double>>();
    if (periods.size() != kFourierPeriods || !std::equal(periods.begin(), periods.end(), baseline_periods().begin())) {
      throw DataError("model baseline periods differ from this build's period list");
    }
    model.baseline.intercept = b.at("intercept").get<double>();
    const auto cosv = b.at("cos").get<std::vector<double>>();
    const auto sinv = b.at("sin").get<std::vector<double>>();
    if (cosv.size() != kFourierPeriods || sinv.size() != kFourierPeriods) throw DataError("bad baseline size");
    model.baseline.cos_coeffs = from_vector(cosv);
    model.baseline.sin_coeffs = from_vector(sinv);
    model.baseline.residual_rms = b.value("residual_rms", 0.0);

    const auto& a = j.at("ar");
    const auto gamma = a.at("gamma").get<std::vector<double>>();
    if (a.at("rows").get<int>() != kLeads || a.at("cols").get<int>() != kArWindow ||
        gamma.size() != static_cast<std::size_t>(kLeads * kArWindow)) {
      throw DataError("AR matrix must be 23 x 24");
    }
    for (int r = 0; r < kLeads; ++r)
      for (int c = 0; c < kArWindow; ++c) model.ar.gamma(r, c) = gamma[static_cast<std::size_t>(r * kArWindow + c)];

    const auto& e = j.at("errors");
    model.errors.smoothing = e.at("smoothing").get<double>();
    const auto& strata = e.at("strata");
    if (strata.size() != kHoursPerWeek) throw DataError("error model needs 168 strata");
    model.errors.means.resize(kHoursPerWeek);
    model.errors.covariances.resize(kHoursPerWeek);
    for (const auto& s : strata) {
      const int m = s.at("hour_of_week").get<int>();
      if (m < 0 || m >= kHoursPerWeek) throw DataError("hour_of_week out of range in model");
      const auto mean = s.at("mean").get<std::vector<double>>();
      const auto lower = s.at("covariance_lower").get<std::vector<double>>();
      if (mean.size() != kLeads || lower.size() != static_cast<std::size_t>(kLeads * (kLeads + 1) / 2)) {
        throw DataError("bad stratum size in model");
      }
      model.errors.means[static_cast<std::size_t>(m)] = from_vector(mean);
      Eigen::MatrixXd cov(kLeads, kLeads);
      std::size_t k = 0;
      for (int r = 0; r < kLeads; ++r)
        for (int c = 0; c <= r; ++c) cov(r, c) = cov(c, r) = lower[k++];
      model.errors.covariances[static_cast<std::size_t>(m)] = std::move(cov);
    }
    model.errors.validate();
    return model;
  } catch (const json::exception& ex) {
    throw DataError(std::string("invalid model document: ") + ex.what());
  }
}

void save_model(const std::filesystem::path& path, const ForecastModel& model) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write model file " + path.string());
  out << model_to_json(model) << '\n';
}

ForecastModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open model file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return model_from_json(buf.str());
}

}  // namespace mfmpc
