#pragma once

#include "mfmpc/plan.hpp"
#include "mfmpc/scenarios.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mfmpc {

/// Energy storage with charge rate u in [-discharge_rate, charge_rate],
/// stored energy q in [0, capacity] and dynamics q+ = q + u. Trading u at
/// mid-price p costs p (u + half_spread |u|).
struct StorageSpec {
  double charge_rate = 10.0;     // C, MW
  double discharge_rate = 10.0;  // D, MW
  double capacity = 50.0;        // Q, MWh
  double half_spread = 0.075;    // eta
  int horizon = 24;              // H, hours
  double terminal_target = 25.0; // planned q at the end of the horizon, MWh
  bool terminal = true;          // policies plan to end at terminal_target
  /// Optional strictly convex term c u^2 per stage; zero in the arbitrage
  /// problem itself, small positive values make the plan unique.
  double quadratic_penalty = 0.0;

  void validate() const;
};

/// Single-forecast plan from energy q over prices[0..H-1] (prices[0] is the
/// known current price). With `terminal` false the final energy is free.
[[nodiscard]] PlanProblem storage_plan_problem(const StorageSpec& spec, double energy,
                                               std::span<const double> prices, bool terminal = true);

/// The same plan as a weighted scenario for multi-forecast problems.
[[nodiscard]] Scenario storage_scenario(const StorageSpec& spec, std::span<const double> prices,
                                        double weight = 1.0, bool terminal = true);

enum class IndexOrder { cyclic, random };
enum class IpMpcInit { mpc_plan, zero };

struct IpMpcConfig {
  int batch_size = 20;
  int iterations = 1;
  double step_alpha = 7.0;
  double step_beta = 0.0;
  IndexOrder order = IndexOrder::cyclic;
  IpMpcInit init = IpMpcInit::mpc_plan;
  std::uint64_t seed = 0;  // used by IndexOrder::random only

  /// alpha / (k + beta) for iterations counted from k = 1.
  [[nodiscard]] double step_size(int k) const { return step_alpha / (k + step_beta); }
  void validate(int scenario_count) const;
};

struct IterationRecord {
  int k = 0;
  double step = 0.0;
  std::vector<int> batch;
  Eigen::VectorXd iterate;  // u after this iteration
  SolveStatus status = SolveStatus::optimal;
  double objective = 0.0;   // objective of the proximal subproblem
};

struct PolicyDecision {
  Eigen::VectorXd action;
  double objective = 0.0;
  SolveStatus status = SolveStatus::optimal;
  /// The planning problem was infeasible at this state and the action is the
  /// projection of zero onto the feasible set.
  bool fallback = false;
  Eigen::VectorXd initial;                // IP-MPC starting point
  std::vector<IterationRecord> iterations;  // IP-MPC only
};

/// Diagnostics trace (iterates, objectives, statuses) as a JSON document.
[[nodiscard]] std::string diagnostics_json(const PolicyDecision& decision);

// Generic policies over affine-dynamics plan problems. They throw
// SolverError when a plan cannot be found.

[[nodiscard]] PolicyDecision mpc_decision(const PlanProblem& problem, const SolverSettings& settings = {});

/// Shared first input minimizing (1/S) sum_i w_i G_i.
[[nodiscard]] PolicyDecision mf_mpc_decision(std::span<const Scenario> scenarios, const Eigen::VectorXd& x_init,
                                             const SolverSettings& settings = {});

/// K minibatch incremental proximal steps
///   u(k) = argmin (alpha_k / b) sum_{i in batch k} F_i(u) + 1/2 ||u - u(k-1)||^2
/// starting from `start`, or from the init rule when `start` is empty
/// (mpc_plan: first input of the plan for scenario 1 alone).
[[nodiscard]] PolicyDecision ip_mpc_decision(std::span<const Scenario> scenarios, const Eigen::VectorXd& x_init,
                                             const IpMpcConfig& config,
                                             const std::optional<Eigen::VectorXd>& start = std::nullopt,
                                             const SolverSettings& settings = {});

/// Scenario indices used by iteration k (k >= 1). Cyclic batches walk the
/// stored order and wrap; random batches are drawn without replacement from
/// a stream derived from (config.seed, k).
[[nodiscard]] std::vector<int> minibatch_indices(const IpMpcConfig& config, int scenario_count, int k);

// Storage arbitrage policies. When the terminal target cannot be reached
// from `energy` these fall back to the projection of zero and set
// PolicyDecision::fallback.

[[nodiscard]] PolicyDecision mpc_policy(const StorageSpec& spec, double energy, std::span<const double> prices);

[[nodiscard]] PolicyDecision mf_mpc_policy(const StorageSpec& spec, double energy, const ScenarioSet& scenarios);

/// With `init_forecast` set and init = mpc_plan, the starting point is the
/// MPC action on that forecast; otherwise MPC on scenario 1.
[[nodiscard]] PolicyDecision ip_mpc_policy(const StorageSpec& spec, double energy, const ScenarioSet& scenarios,
                                           const IpMpcConfig& config,
                                           std::optional<std::span<const double>> init_forecast = std::nullopt);

struct PrescientResult {
  double cost_per_hour = 0.0;
  double total_cost = 0.0;
  std::vector<double> schedule;
};

/// Optimal arbitrage with every price known in advance, without a terminal
/// constraint. A lower bound on the realized cost of any causal policy.
[[nodiscard]] PrescientResult prescient_bound(const StorageSpec& spec, double initial_energy,
                                              std::span<const double> prices);

}  // namespace mfmpc
