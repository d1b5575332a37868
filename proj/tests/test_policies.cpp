#include "mfmpc/policies.hpp"

#include "mfmpc/error.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <vector>

namespace {

using mfmpc::IpMpcConfig;
using mfmpc::ScenarioSet;
using mfmpc::StorageSpec;

constexpr double kInf = std::numeric_limits<double>::infinity();

StorageSpec small_spec(int H) {
  StorageSpec spec;
  spec.horizon = H;
  return spec;
}

// Exhaustive search over integer schedules u[0..H-2] with the last input
// fixed by the terminal constraint. The LP data are integral, so an optimal
// vertex lies on this grid.
struct ScheduleSearch {
  double value = kInf;
  std::vector<double> schedule;
};

ScheduleSearch enumerate_schedules(const StorageSpec& spec, double q0, const std::vector<double>& prices,
                                   std::function<bool(const std::vector<double>&)> accept = {}) {
  const int H = static_cast<int>(prices.size());
  ScheduleSearch best;
  std::vector<double> u(static_cast<std::size_t>(H), 0.0);
  std::function<void(int, double)> rec = [&](int k, double q) {
    if (k == H - 1) {
      u[static_cast<std::size_t>(k)] = spec.terminal_target - q;
      if (accept && !accept(u)) return;
      const double c = oracle::storage_schedule_cost(prices, u, q0, spec.charge_rate, spec.discharge_rate,
                                                     spec.capacity, spec.half_spread, spec.terminal_target, true);
      if (c < best.value) best = {c, u};
      return;
    }
    for (double v = -spec.discharge_rate; v <= spec.charge_rate; v += 1.0) {
      u[static_cast<std::size_t>(k)] = v;
      if (q + v < 0 || q + v > spec.capacity) continue;
      rec(k + 1, q + v);
    }
  };
  rec(0, q0);
  return best;
}

ScenarioSet random_scenarios(std::mt19937_64& rng, int S, int H, double anchor) {
  std::lognormal_distribution<double> price(3.3, 0.5);
  Eigen::MatrixXd prices(S, H);
  for (int i = 0; i < S; ++i) {
    prices(i, 0) = anchor;
    for (int k = 1; k < H; ++k) prices(i, k) = price(rng);
  }
  return ScenarioSet::uniform(prices);
}

TEST(StoragePlanProblem, ConstantPricesAtHalfCapacityDoNothing) {
  const StorageSpec spec = small_spec(3);
  const std::vector<double> prices(3, 30.0);
  const auto plan = mfmpc::solve(mfmpc::storage_plan_problem(spec, 25.0, prices));
  ASSERT_EQ(plan.status, mfmpc::SolveStatus::optimal);
  EXPECT_NEAR(plan.objective, 0.0, 1e-6);
  EXPECT_NEAR(plan.u.cwiseAbs().maxCoeff(), 0.0, 1e-6);
  EXPECT_NEAR(enumerate_schedules(spec, 25.0, prices).value, 0.0, 1e-9);
}

TEST(StoragePlanProblem, TerminalForcesNetCharge) {
  const StorageSpec spec = small_spec(24);
  std::vector<double> prices(24);
  for (int k = 0; k < 24; ++k) prices[static_cast<std::size_t>(k)] = 20.0 + 10.0 * std::sin(k / 3.0);
  const auto plan = mfmpc::solve(mfmpc::storage_plan_problem(spec, 0.0, prices));
  ASSERT_EQ(plan.status, mfmpc::SolveStatus::optimal);
  EXPECT_NEAR(plan.u.sum(), 25.0, 1e-6);
  EXPECT_GE(plan.x.minCoeff(), -1e-6);
  EXPECT_LE(plan.x.maxCoeff(), 50.0 + 1e-6);
}

TEST(StoragePlanProblem, RejectsEnergyOutsideCapacity) {
  const std::vector<double> prices(24, 30.0);
  EXPECT_THROW((void)mfmpc::storage_plan_problem(StorageSpec{}, 60.0, prices), std::invalid_argument);
  EXPECT_THROW((void)mfmpc::storage_plan_problem(StorageSpec{}, -1.0, prices), std::invalid_argument);
}

TEST(StoragePlanProblem, PlanMatchesEnumeration) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> price(5, 80);
  const StorageSpec spec = small_spec(4);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> prices(4);
    for (auto& p : prices) p = price(rng);
    const double q0 = 10.0 * trial;
    const auto plan = mfmpc::solve(mfmpc::storage_plan_problem(spec, q0, prices));
    ASSERT_EQ(plan.status, mfmpc::SolveStatus::optimal);
    EXPECT_NEAR(plan.objective, enumerate_schedules(spec, q0, prices).value, 1e-5);
  }
}

TEST(MpcPolicy, ConstantPricesGiveZeroAction) {
  const std::vector<double> prices(24, 42.0);
  const auto d = mfmpc::mpc_policy(StorageSpec{}, 25.0, prices);
  EXPECT_NEAR(d.action[0], 0.0, 1e-6);
  EXPECT_FALSE(d.fallback);
}

TEST(MpcPolicy, SellsAtPriceSpike) {
  const StorageSpec spec = small_spec(6);
  const std::vector<double> prices = {30, 28, 25, 27, 31, 400};
  const auto plan = mfmpc::solve(mfmpc::storage_plan_problem(spec, 25.0, prices));
  ASSERT_EQ(plan.status, mfmpc::SolveStatus::optimal);
  const auto best = enumerate_schedules(spec, 25.0, prices);
  EXPECT_NEAR(plan.objective, best.value, 1e-5);
  EXPECT_NEAR(best.schedule[5], -spec.discharge_rate, 1e-12);
  EXPECT_NEAR(plan.u(5, 0), -spec.discharge_rate, 1e-6);
}

TEST(MpcPolicy, ParametersAdmitTerminalFromAnyEnergy) {
  // Q/2 <= min(C, D) * H, so the terminal target is reachable from [0, Q].
  const std::vector<double> prices(24, 30.0);
  for (double q : {0.0, 12.5, 50.0}) EXPECT_FALSE(mfmpc::mpc_policy(StorageSpec{}, q, prices).fallback);
}

TEST(MpcPolicy, UnreachableTerminalFallsBack) {
  StorageSpec spec = small_spec(2);
  spec.terminal_target = 50.0;
  const std::vector<double> prices = {30.0, 20.0};
  const auto d = mfmpc::mpc_policy(spec, 0.0, prices);
  EXPECT_TRUE(d.fallback);
  EXPECT_EQ(d.action[0], 0.0);
}

TEST(MfMpcPolicy, SingleScenarioEqualsMpc) {
  std::mt19937_64 rng(4);
  const ScenarioSet set = random_scenarios(rng, 1, 24, 33.0);
  const Eigen::VectorXd row = set.prices.row(0).transpose();
  const auto mpc = mfmpc::mpc_policy(StorageSpec{}, 18.0, {row.data(), 24});
  const auto mf = mfmpc::mf_mpc_policy(StorageSpec{}, 18.0, set);
  EXPECT_NEAR(mf.objective, mpc.objective, 1e-6);
}

TEST(MfMpcPolicy, IdenticalScenariosEqualMpc) {
  std::mt19937_64 rng(6);
  StorageSpec spec;
  spec.quadratic_penalty = 1e-3;  // unique plan, so actions must agree too
  const ScenarioSet one = random_scenarios(rng, 1, 24, 29.0);
  Eigen::MatrixXd repeated = one.prices.replicate(5, 1);
  const auto mf = mfmpc::mf_mpc_policy(spec, 31.0, ScenarioSet::uniform(repeated));
  const Eigen::VectorXd row = one.prices.row(0).transpose();
  const auto mpc = mfmpc::mpc_policy(spec, 31.0, {row.data(), 24});
  EXPECT_NEAR(mf.objective, mpc.objective, 1e-6);
  EXPECT_NEAR(mf.action[0], mpc.action[0], 1e-5);
}

TEST(MfMpcPolicy, ToyInstanceMatchesGridOverSharedInput) {
  StorageSpec spec = small_spec(3);
  spec.capacity = 20.0;
  spec.terminal_target = 10.0;
  Eigen::MatrixXd prices(2, 3);
  prices << 30, 45, 12, 30, 14, 70;
  const ScenarioSet set = ScenarioSet::uniform(prices);
  const auto mf = mfmpc::mf_mpc_policy(spec, 10.0, set);

  // Sum over scenarios of the best recourse given the shared first input.
  auto total = [&](double u0) {
    double sum = 0.0;
    for (int i = 0; i < 2; ++i) {
      const std::vector<double> p = {prices(i, 0), prices(i, 1), prices(i, 2)};
      auto f = oracle::grid_minimize(
          [&](double u1) {
            const std::vector<double> u = {u0, u1, spec.terminal_target - 10.0 - u0 - u1};
            return oracle::storage_schedule_cost(p, u, 10.0, spec.charge_rate, spec.discharge_rate, spec.capacity,
                                                 spec.half_spread, spec.terminal_target, true);
          },
          -spec.discharge_rate, spec.charge_rate, 0.5, 3);
      sum += f.value;
    }
    return sum / 2.0;
  };
  const auto best = oracle::grid_minimize(total, -spec.discharge_rate, spec.charge_rate, 1e-3, 0);
  EXPECT_NEAR(mf.objective, best.value, 1e-3);
}

TEST(MfMpcPolicy, WeightScalingKeepsActionAndScalesObjective) {
  std::mt19937_64 rng(8);
  StorageSpec spec;
  spec.quadratic_penalty = 1e-3;
  ScenarioSet set = random_scenarios(rng, 4, 24, 25.0);
  const auto base = mfmpc::mf_mpc_policy(spec, 25.0, set);
  set.weights *= 3.5;
  const auto scaled = mfmpc::mf_mpc_policy(spec, 25.0, set);
  EXPECT_NEAR(scaled.action[0], base.action[0], 1e-6);
  EXPECT_NEAR(scaled.objective, 3.5 * base.objective, 1e-6 * (1.0 + std::abs(scaled.objective)));
}

TEST(MfMpcPolicy, RejectsMismatchedAnchors) {
  Eigen::MatrixXd prices = Eigen::MatrixXd::Constant(2, 24, 30.0);
  prices(1, 0) = 31.0;
  EXPECT_THROW((void)mfmpc::mf_mpc_policy(StorageSpec{}, 25.0, ScenarioSet::uniform(prices)), std::invalid_argument);
}

TEST(MinibatchIndices, CyclicWalksStoredOrderAndWraps) {
  IpMpcConfig config;
  config.batch_size = 3;
  EXPECT_EQ(mfmpc::minibatch_indices(config, 7, 1), (std::vector<int>{0, 1, 2}));
  EXPECT_EQ(mfmpc::minibatch_indices(config, 7, 2), (std::vector<int>{3, 4, 5}));
  EXPECT_EQ(mfmpc::minibatch_indices(config, 7, 3), (std::vector<int>{6, 0, 1}));
}

TEST(MinibatchIndices, RandomDrawsDistinctIndices) {
  IpMpcConfig config;
  config.batch_size = 5;
  config.order = mfmpc::IndexOrder::random;
  config.seed = 99;
  for (int k = 1; k <= 20; ++k) {
    auto batch = mfmpc::minibatch_indices(config, 8, k);
    std::sort(batch.begin(), batch.end());
    EXPECT_EQ(std::adjacent_find(batch.begin(), batch.end()), batch.end());
    EXPECT_GE(batch.front(), 0);
    EXPECT_LT(batch.back(), 8);
    EXPECT_EQ(batch, [&] {
      auto again = mfmpc::minibatch_indices(config, 8, k);
      std::sort(again.begin(), again.end());
      return again;
    }());
  }
}

TEST(IpMpcPolicy, ZeroIterationsReturnsMpcAction) {
  std::mt19937_64 rng(12);
  const ScenarioSet set = random_scenarios(rng, 20, 24, 35.0);
  std::vector<double> forecast(24, 30.0);
  forecast[0] = 35.0;
  forecast[7] = 55.0;
  IpMpcConfig config;
  config.iterations = 0;
  const auto ip = mfmpc::ip_mpc_policy(StorageSpec{}, 20.0, set, config, std::span<const double>(forecast));
  const auto mpc = mfmpc::mpc_policy(StorageSpec{}, 20.0, forecast);
  EXPECT_EQ(ip.action[0], mpc.action[0]);
}

TEST(IpMpcPolicy, FullBatchConvergesToMfMpc) {
  // Price gaps of several dollars keep the optimum sharp; on nearly flat
  // objectives the diminishing steps cannot travel far enough in 200 rounds.
  StorageSpec spec = small_spec(4);
  spec.quadratic_penalty = 1e-6;
  Eigen::MatrixXd prices(3, 4);
  prices << 30, 10, 60, 20, 30, 15, 50, 40, 30, 5, 45, 25;
  const ScenarioSet set = ScenarioSet::uniform(prices);
  IpMpcConfig config;
  config.batch_size = 3;
  config.iterations = 200;
  const auto ip = mfmpc::ip_mpc_policy(spec, 25.0, set, config);
  const auto mf = mfmpc::mf_mpc_policy(spec, 25.0, set);
  EXPECT_NEAR(ip.action[0], mf.action[0], 1e-3);
  ASSERT_EQ(ip.iterations.size(), 200u);
  for (const auto& rec : ip.iterations) {
    EXPECT_GE(rec.iterate[0], -spec.discharge_rate - 1e-6);
    EXPECT_LE(rec.iterate[0], spec.charge_rate + 1e-6);
  }
}

TEST(IpMpcPolicy, HugeSingleStepEqualsScenarioMpc) {
  std::mt19937_64 rng(16);
  StorageSpec spec;
  spec.quadratic_penalty = 1e-6;
  const ScenarioSet set = random_scenarios(rng, 1, 24, 30.0);
  IpMpcConfig config;
  config.batch_size = 1;
  config.iterations = 1;
  config.step_alpha = 1e9;
  config.init = mfmpc::IpMpcInit::zero;
  const auto ip = mfmpc::ip_mpc_policy(spec, 25.0, set, config);
  const Eigen::VectorXd row = set.prices.row(0).transpose();
  const auto mpc = mfmpc::mpc_policy(spec, 25.0, {row.data(), 24});
  EXPECT_NEAR(ip.action[0], mpc.action[0], 1e-4);
}

TEST(IpMpcPolicy, StepScheduleStartsAtOne) {
  IpMpcConfig config;
  EXPECT_DOUBLE_EQ(config.step_size(1), 7.0);
  EXPECT_DOUBLE_EQ(config.step_size(7), 1.0);
  config.step_beta = 1.0;
  EXPECT_DOUBLE_EQ(config.step_size(1), 3.5);
}

TEST(IpMpcPolicy, DiagnosticsTraceIsJson) {
  std::mt19937_64 rng(18);
  const ScenarioSet set = random_scenarios(rng, 4, 24, 30.0);
  IpMpcConfig config;
  config.batch_size = 2;
  config.iterations = 3;
  const auto d = mfmpc::ip_mpc_policy(StorageSpec{}, 25.0, set, config);
  const auto j = nlohmann::json::parse(mfmpc::diagnostics_json(d));
  ASSERT_EQ(j["iterations"].size(), 3u);
  EXPECT_EQ(j["iterations"][1]["batch"], (std::vector<int>{2, 3}));
  EXPECT_EQ(j["iterations"][2]["status"], "optimal");
  EXPECT_DOUBLE_EQ(j["action"][0].get<double>(), d.action[0]);
}

TEST(IpMpcPolicy, RejectsBatchLargerThanScenarioSet) {
  std::mt19937_64 rng(20);
  const ScenarioSet set = random_scenarios(rng, 4, 24, 30.0);
  IpMpcConfig config;
  config.batch_size = 5;
  EXPECT_THROW((void)mfmpc::ip_mpc_policy(StorageSpec{}, 25.0, set, config), std::invalid_argument);
}

TEST(PrescientBound, ConstantPricesGiveZero) {
  const std::vector<double> prices(3, 25.0);
  // From empty storage; with energy on hand and no terminal, selling pays.
  const auto r = mfmpc::prescient_bound(StorageSpec{}, 0.0, prices);
  EXPECT_NEAR(r.total_cost, 0.0, 1e-6);
  for (double u : r.schedule) EXPECT_NEAR(u, 0.0, 1e-6);
  // Grid over 3-hour schedules without terminal constraint.
  double best = kInf;
  for (double a = -10; a <= 10; a += 1)
    for (double b = -10; b <= 10; b += 1)
      for (double c = -10; c <= 10; c += 1)
        best = std::min(best, oracle::storage_schedule_cost(prices, {a, b, c}, 0.0, 10, 10, 50, 0.075, 0, false));
  EXPECT_NEAR(best, 0.0, 1e-12);
}

TEST(PrescientBound, BuyLowSellHigh) {
  const std::vector<double> prices = {10.0, 100.0};
  const auto r = mfmpc::prescient_bound(StorageSpec{}, 0.0, prices);
  EXPECT_NEAR(r.total_cost, -817.5, 1e-6);
  EXPECT_NEAR(r.cost_per_hour, -408.75, 1e-6);
  double best = kInf;
  for (double a = -10; a <= 10; a += 0.5)
    for (double b = -10; b <= 10; b += 0.5)
      best = std::min(best, oracle::storage_schedule_cost(prices, {a, b}, 0.0, 10, 10, 50, 0.075, 0, false));
  EXPECT_NEAR(best, -817.5, 1e-9);
}

TEST(PrescientBound, EmptyWindowIsAnError) {
  EXPECT_THROW((void)mfmpc::prescient_bound(StorageSpec{}, 25.0, std::vector<double>{}), std::invalid_argument);
}

}  // namespace
