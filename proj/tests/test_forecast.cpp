#include "mfmpc/forecast.hpp"

#include "mfmpc/error.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <json.hpp>

#include <Eigen/Eigenvalues>

#include <cmath>
#include <numbers>
#include <random>

namespace {

using fixtures::ar1_series;
using fixtures::design;
using fixtures::kPeriods;
using fixtures::stratified_sample;

using mfmpc::kArWindow;
using mfmpc::kHoursPerWeek;
using mfmpc::kLeads;

double relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return (a - b).norm() / b.norm(); }

mfmpc::ForecastModel zero_model() {
  mfmpc::ForecastModel m;
  m.errors.means.assign(kHoursPerWeek, Eigen::VectorXd::Zero(kLeads));
  m.errors.covariances.assign(kHoursPerWeek, Eigen::MatrixXd::Zero(kLeads, kLeads));
  return m;
}

TEST(FourierFeatures, PhaseZeroAndPeriodicity) {
  const Eigen::VectorXd f0 = mfmpc::fourier_features(0.0);
  ASSERT_EQ(f0.size(), 33);
  EXPECT_EQ(f0[0], 1.0);
  for (int i = 0; i < 16; ++i) {
    EXPECT_EQ(f0[1 + 2 * i], 1.0);
    EXPECT_EQ(f0[2 + 2 * i], 0.0);
  }
  const Eigen::VectorXd f24 = mfmpc::fourier_features(24.0);
  for (int k = 0; k < 4; ++k) {
    EXPECT_NEAR(f24[1 + 2 * k], f0[1 + 2 * k], 1e-12);
    EXPECT_NEAR(f24[2 + 2 * k], f0[2 + 2 * k], 1e-12);
  }
  EXPECT_NEAR(mfmpc::fourier_features(12.0)[1], -1.0, 1e-15);
  for (int i = 0; i < 16; ++i) EXPECT_EQ(mfmpc::baseline_periods()[static_cast<std::size_t>(i)], kPeriods[i]);
}

TEST(FitBaseline, ConstantSeriesGivesInterceptOnly) {
  const std::vector<double> z(2000, 0.5);
  const auto m = mfmpc::fit_baseline(z, 0.0);
  EXPECT_NEAR(m.intercept, 0.5, 1e-12);
  EXPECT_LE(m.cos_coeffs.cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LE(m.sin_coeffs.cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LE(m.residual_rms, 1e-10);
}

TEST(FitBaseline, RecoversDailyCosine) {
  std::vector<double> z(8760 * 2);
  for (std::size_t t = 0; t < z.size(); ++t) z[t] = std::cos(2 * std::numbers::pi * static_cast<double>(t) / 24.0);
  const auto m = mfmpc::fit_baseline(z, 0.0);
  Eigen::VectorXd expected = Eigen::VectorXd::Zero(33);
  expected[1] = 1.0;
  EXPECT_LE((m.coefficients() - expected).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(FitBaseline, MatchesNormalEquations) {
  const int n = 17520;
  std::mt19937_64 rng(7);
  std::normal_distribution<double> noise(0.0, 0.1);
  const Eigen::MatrixXd X = design(n);
  Eigen::VectorXd truth(33);
  for (auto& v : truth) v = noise(rng);
  Eigen::VectorXd y = X * truth;
  for (auto& v : y) v += noise(rng);

  const double lambda = 1e-3 * n;
  Eigen::VectorXd penalty = Eigen::VectorXd::Constant(33, lambda);
  penalty[0] = 0.0;
  const Eigen::VectorXd oracle_theta = oracle::ridge_normal_equations(X, y, penalty);
  const auto m = mfmpc::fit_baseline({y.data(), static_cast<std::size_t>(n)}, lambda);
  EXPECT_LE(relative_error(m.coefficients(), oracle_theta), 1e-8);
  EXPECT_NEAR(m.residual_rms, std::sqrt((y - X * oracle_theta).squaredNorm() / n), 1e-10);
}

TEST(FitBaseline, RejectsShortSeries) {
  EXPECT_THROW((void)mfmpc::fit_baseline(std::vector<double>(32, 1.0), 0.0), mfmpc::DataError);
}

TEST(FitAr, ZeroResidualsGiveZeroMatrix) {
  const auto m = mfmpc::fit_ar(std::vector<double>(500, 0.0), 1.0);
  EXPECT_EQ(m.gamma.rows(), 23);
  EXPECT_EQ(m.gamma.cols(), 24);
  EXPECT_EQ(m.gamma.cwiseAbs().maxCoeff(), 0.0);
}

TEST(FitAr, RecoversAr1Powers) {
  std::mt19937_64 rng(9);
  const auto r = ar1_series(rng, 40000, 0.9, 0.1);
  const auto m = mfmpc::fit_ar(r, 1e-6);
  for (int j = 0; j < kLeads; ++j) {
    EXPECT_NEAR(m.gamma(j, kArWindow - 1), std::pow(0.9, j + 1), 0.05) << "lead " << j + 1;
    EXPECT_LE(m.gamma.row(j).head(kArWindow - 1).cwiseAbs().maxCoeff(), 0.05) << "lead " << j + 1;
  }
}

TEST(FitAr, MatchesNormalEquationsPerRow) {
  std::mt19937_64 rng(11);
  const auto r = ar1_series(rng, 3000, 0.7, 1.0);
  const int pairs = 3000 - 46;
  EXPECT_EQ(pairs, 2954);
  Eigen::MatrixXd X(pairs, 24);
  for (int i = 0; i < pairs; ++i)
    for (int j = 0; j < 24; ++j) X(i, j) = r[static_cast<std::size_t>(i + j)];
  const double lambda = 2.5;
  const auto m = mfmpc::fit_ar(r, lambda);
  for (int lead = 1; lead <= 23; ++lead) {
    Eigen::VectorXd y(pairs);
    for (int i = 0; i < pairs; ++i) y[i] = r[static_cast<std::size_t>(i + 23 + lead)];
    const Eigen::VectorXd expected = oracle::ridge_normal_equations(X, y, Eigen::VectorXd::Constant(24, lambda));
    EXPECT_LE(relative_error(m.gamma.row(lead - 1).transpose(), expected), 1e-8) << "lead " << lead;
  }
}

TEST(FitAr, RejectsShortSeries) {
  EXPECT_THROW((void)mfmpc::fit_ar(std::vector<double>(46, 1.0), 0.0), mfmpc::DataError);
  EXPECT_NO_THROW((void)mfmpc::fit_ar(std::vector<double>(47, 1.0), 0.1));
}

TEST(FitErrorModel, NoSmoothingGivesEmpiricalMoments) {
  std::mt19937_64 rng(13);
  const auto s = stratified_sample(rng, 40);
  const auto model = mfmpc::fit_error_model(s.errors, s.strata, 0.0);
  for (int m : {0, 17, 100, 167}) {
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(kLeads);
    int n = 0;
    for (std::size_t i = 0; i < s.strata.size(); ++i)
      if (s.strata[i] == m) {
        mean += s.errors.row(static_cast<Eigen::Index>(i)).transpose();
        ++n;
      }
    mean /= n;
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(kLeads, kLeads);
    for (std::size_t i = 0; i < s.strata.size(); ++i)
      if (s.strata[i] == m) {
        const Eigen::VectorXd d = s.errors.row(static_cast<Eigen::Index>(i)).transpose() - mean;
        for (int a = 0; a < kLeads; ++a)
          for (int b = 0; b < kLeads; ++b) cov(a, b) += d[a] * d[b];
      }
    cov /= n;
    const auto sm = static_cast<std::size_t>(m);
    EXPECT_LE((model.means[sm] - mean).norm(), 1e-12 * mean.norm());
    EXPECT_LE((model.covariances[sm] - cov).norm(), 1e-12 * cov.norm()) << "stratum " << m;
  }
}

TEST(FitErrorModel, LargeSmoothingReachesConsensus) {
  std::mt19937_64 rng(15);
  const auto s = stratified_sample(rng, 30);
  const auto model = mfmpc::fit_error_model(s.errors, s.strata, 1e12);
  const double scale = model.covariances[0].norm();
  double worst = 0.0;
  for (int a = 0; a < kHoursPerWeek; ++a)
    for (int b = a + 1; b < kHoursPerWeek; ++b)
      worst = std::max(worst, (model.covariances[static_cast<std::size_t>(a)] -
                               model.covariances[static_cast<std::size_t>(b)]).norm());
  EXPECT_LE(worst, 1e-6 * scale);

  // With equal stratum sizes the common limit is the average of the
  // per-stratum estimates.
  const auto raw = mfmpc::fit_error_model(s.errors, s.strata, 0.0);
  Eigen::MatrixXd pooled = Eigen::MatrixXd::Zero(kLeads, kLeads);
  for (const auto& c : raw.covariances) pooled += c / kHoursPerWeek;
  EXPECT_LE((model.covariances[0] - pooled).norm(), 1e-6 * scale);
}

TEST(FitErrorModel, SmoothingReducesRoughness) {
  std::mt19937_64 rng(17);
  const auto s = stratified_sample(rng, 30);
  double previous = std::numeric_limits<double>::infinity();
  for (double gamma : {0.0, 5.0, 50.0, 500.0}) {
    const double rough = mfmpc::covariance_roughness(mfmpc::fit_error_model(s.errors, s.strata, gamma));
    EXPECT_LE(rough, previous) << "gamma " << gamma;
    previous = rough;
  }
}

TEST(FitErrorModel, IidStandardNormalErrorsGiveIdentity) {
  // 1000 rows per stratum; heavy smoothing pools the hours of the week so
  // each estimate effectively sees all 168000 samples.
  std::mt19937_64 rng(19);
  const auto s = stratified_sample(rng, 1000, true);
  const auto model = mfmpc::fit_error_model(s.errors, s.strata, 1e8);
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(kLeads, kLeads);
  for (const auto& c : model.covariances) EXPECT_LE((c - I).norm(), 0.1);
  for (const auto& mu : model.means) EXPECT_LE(mu.cwiseAbs().maxCoeff(), 0.25);
}

TEST(FitErrorModel, FloorsRankDeficientEstimates) {
  std::mt19937_64 rng(21);
  const auto s = stratified_sample(rng, 5);
  for (double gamma : {0.0, 1.0}) {
    const auto model = mfmpc::fit_error_model(s.errors, s.strata, gamma);
    for (const auto& c : model.covariances) {
      EXPECT_TRUE(c.isApprox(c.transpose(), 0.0));
      EXPECT_EQ((c - c.transpose()).cwiseAbs().maxCoeff(), 0.0);
      EXPECT_GE(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(c).eigenvalues().minCoeff(), mfmpc::kCovarianceFloor);
    }
  }
}

TEST(FitErrorModel, EmptyStratumIsAnError) {
  Eigen::MatrixXd e = Eigen::MatrixXd::Zero(167, kLeads);
  std::vector<int> strata(167);
  for (int i = 0; i < 167; ++i) strata[static_cast<std::size_t>(i)] = i;
  EXPECT_THROW((void)mfmpc::fit_error_model(e, strata, 1.0), mfmpc::DataError);
}

TEST(PointForecast, ReducesToBaselineWithoutAr) {
  auto m = zero_model();
  Eigen::VectorXd window = Eigen::VectorXd::LinSpaced(24, -1.0, 1.0);
  const Eigen::VectorXd e = mfmpc::point_forecast(m, 100, window);
  for (int j = 0; j < kLeads; ++j) EXPECT_NEAR(e[j], std::numbers::e, 1e-14);

  m.baseline.intercept = 1.2;
  m.baseline.cos_coeffs[0] = 0.1;
  const Eigen::VectorXd p = mfmpc::point_forecast(m, 100, window);
  for (int j = 0; j < kLeads; ++j) {
    const double b = 1.2 + 0.1 * std::cos(2 * std::numbers::pi * (101 + j) / 24.0);
    EXPECT_NEAR(p[j], std::exp(std::exp(b)), 1e-12 * p[j]);
  }
}

TEST(PointForecast, MatchesDirectFormula) {
  std::mt19937_64 rng(23);
  std::normal_distribution<double> normal(0.0, 0.05);
  auto m = zero_model();
  m.baseline.intercept = 1.1;
  for (auto& v : m.baseline.cos_coeffs) v = normal(rng);
  for (auto& v : m.baseline.sin_coeffs) v = normal(rng);
  for (auto& v : m.ar.gamma.reshaped()) v = normal(rng);
  Eigen::VectorXd window(24);
  for (auto& v : window) v = 4 * normal(rng);

  const std::int64_t t = 5000;
  const Eigen::VectorXd p = mfmpc::point_forecast(m, t, window);
  const Eigen::VectorXd theta = m.baseline.coefficients();
  for (int j = 0; j < kLeads; ++j) {
    const Eigen::VectorXd phi = design(static_cast<int>(t + j + 2)).row(t + 1 + j).transpose();
    double ar = 0.0;
    for (int c = 0; c < 24; ++c) ar += m.ar.gamma(j, c) * window[c];
    const double expected = std::exp(std::exp(theta.dot(phi) + ar));
    EXPECT_NEAR(p[j], expected, 1e-11 * expected);
    EXPECT_GT(p[j], 1.0);
  }
}

TEST(SampleScenarios, ZeroCovarianceGivesPointForecast) {
  auto m = zero_model();
  m.baseline.intercept = 1.2;
  m.ar.gamma(3, 23) = 0.4;
  const Eigen::VectorXd window = Eigen::VectorXd::Constant(24, 0.3);
  const auto set = mfmpc::sample_scenarios(m, 42, window, 31.5, 6, 99);
  const Eigen::VectorXd point = mfmpc::point_forecast(m, 42, window);
  ASSERT_EQ(set.size(), 6);
  ASSERT_EQ(set.horizon(), 24);
  for (int i = 0; i < 6; ++i) {
    EXPECT_EQ(set.prices(i, 0), 31.5);
    for (int j = 0; j < kLeads; ++j) EXPECT_NEAR(set.prices(i, j + 1), point[j], 1e-12 * point[j]);
  }
  EXPECT_NO_THROW(set.validate());
}

TEST(SampleScenarios, DeterministicAndPrefixConsistent) {
  auto m = zero_model();
  for (auto& c : m.errors.covariances) c = 0.04 * Eigen::MatrixXd::Identity(kLeads, kLeads);
  const Eigen::VectorXd window = Eigen::VectorXd::Zero(24);
  const auto a = mfmpc::sample_scenarios(m, 7, window, 20.0, 40, 1234);
  const auto b = mfmpc::sample_scenarios(m, 7, window, 20.0, 40, 1234);
  EXPECT_TRUE(a.prices.cwiseEqual(b.prices).all());
  const auto prefix = mfmpc::sample_scenarios(m, 7, window, 20.0, 13, 1234);
  EXPECT_TRUE(prefix.prices.cwiseEqual(a.prices.topRows(13)).all());
  const auto other = mfmpc::sample_scenarios(m, 7, window, 20.0, 40, 1235);
  EXPECT_FALSE(other.prices.cwiseEqual(a.prices).all());
}

TEST(SampleScenarios, ErrorMomentsMatchModel) {
  const double sigma = 0.3;
  auto m = zero_model();
  for (auto& c : m.errors.covariances) c = sigma * sigma * Eigen::MatrixXd::Identity(kLeads, kLeads);
  m.errors.means[static_cast<std::size_t>(m.stratum(0))] = Eigen::VectorXd::Constant(kLeads, 0.0);
  const auto set = mfmpc::sample_scenarios(m, 0, Eigen::VectorXd::Zero(24), 10.0, 10000, 5);
  // Baseline and AR are zero, so loglog of each price is the sampled error.
  Eigen::MatrixXd e(10000, kLeads);
  for (int i = 0; i < 10000; ++i)
    for (int j = 0; j < kLeads; ++j) e(i, j) = std::log(std::log(set.prices(i, j + 1)));
  const Eigen::VectorXd mean = e.colwise().mean().transpose();
  EXPECT_LE(mean.cwiseAbs().maxCoeff(), 3 * sigma / 100);
  const Eigen::MatrixXd centered = e.rowwise() - mean.transpose();
  const Eigen::MatrixXd cov = centered.transpose() * centered / 10000.0;
  EXPECT_LE((cov - sigma * sigma * Eigen::MatrixXd::Identity(kLeads, kLeads)).cwiseAbs().maxCoeff(), 0.01);
}

TEST(SampleScenarios, UsesStratumOfForecastOrigin) {
  auto m = zero_model();
  m.origin_hour = 24 * 4;  // 1970-01-05, a Monday
  ASSERT_EQ(m.stratum(0), 0);
  m.errors.means[5] = Eigen::VectorXd::Constant(kLeads, 0.5);
  const auto hit = mfmpc::sample_scenarios(m, 5, Eigen::VectorXd::Zero(24), 10.0, 2, 1);
  const auto miss = mfmpc::sample_scenarios(m, 6, Eigen::VectorXd::Zero(24), 10.0, 2, 1);
  EXPECT_NEAR(hit.prices(1, 5), std::exp(std::exp(0.5)), 1e-12);
  EXPECT_NEAR(miss.prices(1, 5), std::numbers::e, 1e-12);
}

TEST(RmsLogError, Definitions) {
  Eigen::MatrixXd actual = Eigen::MatrixXd::Constant(5, 23, 40.0);
  EXPECT_EQ(mfmpc::rms_log_error(actual, actual), 0.0);
  const Eigen::MatrixXd forecast = actual * std::exp(-0.3);
  EXPECT_NEAR(mfmpc::rms_log_error(forecast, actual), 0.3, 1e-14);
  Eigen::MatrixXd mixed = actual;
  mixed.col(2) *= std::exp(0.5);
  const Eigen::VectorXd by_lead = mfmpc::rms_log_error_by_lead(mixed, actual);
  EXPECT_NEAR(by_lead[2], 0.5, 1e-14);
  EXPECT_EQ(by_lead[0], 0.0);
  EXPECT_THROW((void)mfmpc::rms_log_error(actual.topRows(3), actual), std::invalid_argument);
}

TEST(ModelJson, RoundTripPreservesModel) {
  std::mt19937_64 rng(25);
  const auto s = stratified_sample(rng, 30);
  mfmpc::ForecastModel m;
  m.origin_hour = 400000;
  m.clip_level = 6.6;
  m.baseline.intercept = 1.234;
  m.baseline.sin_coeffs[7] = -0.01;
  m.ar.gamma(22, 0) = 0.125;
  m.errors = mfmpc::fit_error_model(s.errors, s.strata, 3.0);
  const std::string text = mfmpc::model_to_json(m);
  const auto j = nlohmann::json::parse(text);
  EXPECT_EQ(j["model_version"], 1);
  EXPECT_EQ(j["errors"]["strata"][0]["covariance_lower"].size(), 276u);
  EXPECT_EQ(j["ar"]["gamma"].size(), 552u);
  EXPECT_EQ(j["ar"]["gamma"][22 * 24].get<double>(), 0.125);

  const auto back = mfmpc::model_from_json(text);
  EXPECT_EQ(back.origin_hour, m.origin_hour);
  EXPECT_EQ(back.clip_level, 6.6);
  EXPECT_EQ(back.baseline.coefficients(), m.baseline.coefficients());
  EXPECT_EQ(back.ar.gamma, m.ar.gamma);
  for (int k = 0; k < kHoursPerWeek; ++k) {
    EXPECT_EQ(back.errors.means[static_cast<std::size_t>(k)], m.errors.means[static_cast<std::size_t>(k)]);
    EXPECT_EQ(back.errors.covariances[static_cast<std::size_t>(k)], m.errors.covariances[static_cast<std::size_t>(k)]);
  }
}

TEST(ModelJson, RejectsOtherVersionsAndMalformedDocuments) {
  auto j = nlohmann::json::parse(mfmpc::model_to_json(zero_model()));
  j["model_version"] = 2;
  EXPECT_THROW((void)mfmpc::model_from_json(j.dump()), mfmpc::DataError);
  EXPECT_THROW((void)mfmpc::model_from_json("{"), mfmpc::DataError);
  j["model_version"] = 1;
  j["ar"]["gamma"].erase(0);
  EXPECT_THROW((void)mfmpc::model_from_json(j.dump()), mfmpc::DataError);
}

TEST(FitForecast, ComposesTheThreeFits) {
  // Double-log prices: daily cycle plus AR(1) residuals.
  std::mt19937_64 rng(27);
  const int n = 24 * 7 * 30;
  const auto r = ar1_series(rng, n, 0.8, 0.05);
  std::vector<double> prices(static_cast<std::size_t>(n));
  for (int t = 0; t < n; ++t) {
    const double z = 1.2 + 0.1 * std::cos(2 * std::numbers::pi * t / 24.0) + r[static_cast<std::size_t>(t)];
    prices[static_cast<std::size_t>(t)] = std::exp(std::exp(z));
  }
  const auto series = mfmpc::PriceSeries::hourly(24 * 4, prices);
  const auto model = mfmpc::fit_forecast(series, 1.5, {.ar_ridge = 0.0, .smoothing = 1.0});
  EXPECT_EQ(model.origin_hour, 24 * 4);
  EXPECT_EQ(model.clip_level, 1.5);
  EXPECT_NEAR(model.baseline.intercept, 1.2, 0.02);
  EXPECT_NEAR(model.baseline.cos_coeffs[0], 0.1, 0.01);
  EXPECT_NEAR(model.ar.gamma(0, 23), 0.8, 0.05);
  // One-step errors are the AR innovations.
  double mean_var = 0.0;
  for (const auto& c : model.errors.covariances) mean_var += c(0, 0) / kHoursPerWeek;
  EXPECT_NEAR(std::sqrt(mean_var), 0.05, 0.005);
}

}  // namespace
