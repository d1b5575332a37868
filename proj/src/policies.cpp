#include "mfmpc/policies.hpp"

#include "mfmpc/error.hpp"
#include "mfmpc/random.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

namespace mfmpc {

namespace {

void require(bool ok, const std::string& message) {
  if (!ok) throw std::invalid_argument(message);
}

std::string failure_message(const std::string& what, const QpSolution& raw) {
  return what + ": " + std::string(to_string(raw.status)) + " (primal residual " +
         std::to_string(raw.primal_residual) + ", dual residual " + std::to_string(raw.dual_residual) +
         ", iterations " + std::to_string(raw.iterations) + ")";
}

// The terminal target is reachable from `energy` within the horizon without
// leaving [0, Q] (moving monotonically toward it never leaves the box).
bool terminal_reachable(const StorageSpec& spec, double energy) {
  if (!spec.terminal) return true;
  const double gap = spec.terminal_target - energy;
  const double hours = static_cast<double>(spec.horizon);
  return gap <= spec.charge_rate * hours + 1e-9 && -gap <= spec.discharge_rate * hours + 1e-9;
}

PolicyDecision fallback_decision(const StorageSpec& spec, double energy) {
  PolicyDecision d;
  const double lo = std::max(-spec.discharge_rate, -energy);
  const double hi = std::min(spec.charge_rate, spec.capacity - energy);
  d.action = Eigen::VectorXd::Constant(1, std::clamp(0.0, lo, hi));
  d.fallback = true;
  d.status = SolveStatus::infeasible;
  return d;
}

void check_energy(const StorageSpec& spec, double energy) {
  if (!(energy >= -1e-9 && energy <= spec.capacity + 1e-9)) {
    throw std::invalid_argument("stored energy " + std::to_string(energy) + " outside [0, capacity]");
  }
}

std::vector<Scenario> storage_scenarios(const StorageSpec& spec, const ScenarioSet& set) {
  std::vector<Scenario> out;
  out.reserve(static_cast<std::size_t>(set.size()));
  for (int i = 0; i < set.size(); ++i) {
    const Eigen::VectorXd row = set.prices.row(i).transpose();
    out.push_back(storage_scenario(spec, std::span<const double>(row.data(), static_cast<std::size_t>(row.size())),
                                   set.weights[i], spec.terminal));
  }
  return out;
}

}  // namespace

void StorageSpec::validate() const {
  require(charge_rate > 0.0 && discharge_rate > 0.0 && capacity > 0.0, "C, D and Q must be positive");
  require(half_spread > 0.0 && half_spread < 1.0, "half spread must lie in (0, 1)");
  require(horizon >= 1, "horizon must be positive");
  require(terminal_target >= 0.0 && terminal_target <= capacity, "terminal target must lie in [0, Q]");
  require(quadratic_penalty >= 0.0 && std::isfinite(quadratic_penalty), "quadratic penalty must be >= 0");
}

Scenario storage_scenario(const StorageSpec& spec, std::span<const double> prices, double weight, bool terminal) {
  spec.validate();
  const int H = static_cast<int>(prices.size());
  require(H >= 1, "at least one price is required");
  for (double p : prices) require(std::isfinite(p) && p > 0.0, "prices must be finite and positive");

  Scenario sc;
  sc.weight = weight;
  sc.dynamics = AffineDynamics::time_invariant(Eigen::MatrixXd::Ones(1, 1), Eigen::MatrixXd::Ones(1, 1),
                                               Eigen::VectorXd::Zero(1), H);
  sc.cost.stages.reserve(prices.size());
  for (double p : prices) {
    StageCost st = StageCost::zero(1, 1, -spec.discharge_rate, spec.charge_rate);
    st.input_linear[0] = p;
    st.input_abs[0] = spec.half_spread * p;
    st.input_quad[0] = 2.0 * spec.quadratic_penalty;
    st.state_lo[0] = 0.0;
    st.state_hi[0] = spec.capacity;
    sc.cost.stages.push_back(std::move(st));
  }
  if (terminal) {
    sc.cost.terminal.E = Eigen::MatrixXd::Ones(1, 1);
    sc.cost.terminal.f = Eigen::VectorXd::Constant(1, spec.terminal_target);
  }
  return sc;
}

PlanProblem storage_plan_problem(const StorageSpec& spec, double energy, std::span<const double> prices,
                                 bool terminal) {
  check_energy(spec, energy);
  Scenario sc = storage_scenario(spec, prices, 1.0, terminal);
  PlanProblem problem;
  problem.dynamics = std::move(sc.dynamics);
  problem.cost = std::move(sc.cost);
  problem.x_init = Eigen::VectorXd::Constant(1, energy);
  return problem;
}

void IpMpcConfig::validate(int scenario_count) const {
  require(batch_size >= 1, "batch size must be positive");
  require(iterations >= 0, "iteration count must be nonnegative");
  require(std::isfinite(step_alpha) && step_alpha > 0.0, "step alpha must be positive");
  require(std::isfinite(step_beta) && step_beta >= 0.0, "step beta must be nonnegative");
  require(batch_size <= scenario_count, "batch size exceeds the number of scenarios");
}

std::vector<int> minibatch_indices(const IpMpcConfig& config, int scenario_count, int k) {
  std::vector<int> batch(static_cast<std::size_t>(config.batch_size));
  if (config.order == IndexOrder::cyclic) {
    const long start = static_cast<long>(k - 1) * config.batch_size;
    for (int j = 0; j < config.batch_size; ++j) {
      batch[static_cast<std::size_t>(j)] = static_cast<int>((start + j) % scenario_count);
    }
    return batch;
  }
  std::vector<int> all(static_cast<std::size_t>(scenario_count));
  std::iota(all.begin(), all.end(), 0);
  std::mt19937_64 rng(derive_seed(config.seed, static_cast<std::uint64_t>(k)));
  // Partial Fisher-Yates: the first b entries are a uniform draw without replacement.
  for (int j = 0; j < config.batch_size; ++j) {
    std::uniform_int_distribution<int> pick(j, scenario_count - 1);
    std::swap(all[static_cast<std::size_t>(j)], all[static_cast<std::size_t>(pick(rng))]);
  }
  std::copy_n(all.begin(), config.batch_size, batch.begin());
  return batch;
}

PolicyDecision mpc_decision(const PlanProblem& problem, const SolverSettings& settings) {
  const CoupledPlanProblem coupled = CoupledPlanProblem::from(problem);
  const CoupledPlan plan = solve(coupled, settings);
  if (plan.status != SolveStatus::optimal) throw SolverError(failure_message("MPC plan", plan.raw));
  PolicyDecision d;
  d.action = plan.first_input;
  d.objective = plan.objective;
  return d;
}

PolicyDecision mf_mpc_decision(std::span<const Scenario> scenarios, const Eigen::VectorXd& x_init,
                               const SolverSettings& settings) {
  require(!scenarios.empty(), "MF-MPC needs at least one scenario");
  CoupledPlanProblem coupled;
  coupled.scenarios.assign(scenarios.begin(), scenarios.end());
  coupled.x_init = x_init;
  coupled.scale = 1.0 / static_cast<double>(scenarios.size());
  const CoupledPlan plan = solve(coupled, settings);
  if (plan.status != SolveStatus::optimal) throw SolverError(failure_message("MF-MPC plan", plan.raw));
  PolicyDecision d;
  d.action = plan.first_input;
  d.objective = plan.objective;
  return d;
}

PolicyDecision ip_mpc_decision(std::span<const Scenario> scenarios, const Eigen::VectorXd& x_init,
                               const IpMpcConfig& config, const std::optional<Eigen::VectorXd>& start,
                               const SolverSettings& settings) {
  require(!scenarios.empty(), "IP-MPC needs at least one scenario");
  const int S = static_cast<int>(scenarios.size());
  config.validate(S);

  PolicyDecision d;
  if (start) {
    d.initial = *start;
  } else if (config.init == IpMpcInit::zero) {
    d.initial = Eigen::VectorXd::Zero(scenarios.front().dynamics.input_dim());
  } else {
    PlanProblem first;
    first.dynamics = scenarios.front().dynamics;
    first.cost = scenarios.front().cost;
    first.x_init = x_init;
    d.initial = mpc_decision(first, settings).action;
  }

  Eigen::VectorXd u = d.initial;
  d.objective = 0.0;
  for (int k = 1; k <= config.iterations; ++k) {
    IterationRecord rec;
    rec.k = k;
    rec.step = config.step_size(k);
    rec.batch = minibatch_indices(config, S, k);

    CoupledPlanProblem sub;
    sub.scenarios.reserve(rec.batch.size());
    for (int i : rec.batch) sub.scenarios.push_back(scenarios[static_cast<std::size_t>(i)]);
    sub.x_init = x_init;
    sub.scale = rec.step / static_cast<double>(config.batch_size);
    sub.prox = ProxTerm{u, 1.0};
    const CoupledPlan plan = solve(sub, prox_settings(settings));
    rec.status = plan.status;
    rec.objective = plan.objective;
    if (plan.status != SolveStatus::optimal) {
      d.iterations.push_back(std::move(rec));
      throw SolverError(failure_message("IP-MPC iteration " + std::to_string(k), plan.raw) +
                        "; trace: " + diagnostics_json(d));
    }
    u = plan.first_input;
    rec.iterate = u;
    d.objective = plan.objective;
    d.iterations.push_back(std::move(rec));
  }
  d.action = u;
  return d;
}

PolicyDecision mpc_policy(const StorageSpec& spec, double energy, std::span<const double> prices) {
  spec.validate();
  check_energy(spec, energy);
  require(static_cast<int>(prices.size()) == spec.horizon, "forecast length must equal the horizon");
  if (!terminal_reachable(spec, energy)) return fallback_decision(spec, energy);
  const PlanProblem problem = storage_plan_problem(spec, energy, prices, spec.terminal);
  const CoupledPlan plan = solve(CoupledPlanProblem::from(problem));
  if (plan.status == SolveStatus::infeasible) return fallback_decision(spec, energy);
  if (plan.status != SolveStatus::optimal) throw SolverError(failure_message("MPC plan", plan.raw));
  PolicyDecision d;
  d.action = plan.first_input;
  d.objective = plan.objective;
  return d;
}

PolicyDecision mf_mpc_policy(const StorageSpec& spec, double energy, const ScenarioSet& scenarios) {
  spec.validate();
  check_energy(spec, energy);
  scenarios.validate();
  require(scenarios.horizon() == spec.horizon, "scenario length must equal the horizon");
  if (!terminal_reachable(spec, energy)) return fallback_decision(spec, energy);
  const std::vector<Scenario> plans = storage_scenarios(spec, scenarios);
  return mf_mpc_decision(plans, Eigen::VectorXd::Constant(1, energy));
}

PolicyDecision ip_mpc_policy(const StorageSpec& spec, double energy, const ScenarioSet& scenarios,
                             const IpMpcConfig& config, std::optional<std::span<const double>> init_forecast) {
  spec.validate();
  check_energy(spec, energy);
  scenarios.validate();
  require(scenarios.horizon() == spec.horizon, "scenario length must equal the horizon");
  if (!terminal_reachable(spec, energy)) return fallback_decision(spec, energy);
  std::optional<Eigen::VectorXd> start;
  if (config.init == IpMpcInit::mpc_plan && init_forecast) {
    start = mpc_policy(spec, energy, *init_forecast).action;
  }
  const std::vector<Scenario> plans = storage_scenarios(spec, scenarios);
  return ip_mpc_decision(plans, Eigen::VectorXd::Constant(1, energy), config, start);
}

PrescientResult prescient_bound(const StorageSpec& spec, double initial_energy, std::span<const double> prices) {
  require(!prices.empty(), "prescient bound needs a nonempty price window");
  const PlanProblem problem = storage_plan_problem(spec, initial_energy, prices, /*terminal=*/false);
  const Plan plan = solve(problem);
  if (plan.status != SolveStatus::optimal) throw SolverError("prescient LP: " + std::string(to_string(plan.status)));
  PrescientResult out;
  out.total_cost = plan.objective;
  out.cost_per_hour = plan.objective / static_cast<double>(prices.size());
  out.schedule.assign(plan.u.data(), plan.u.data() + plan.u.size());
  return out;
}

std::string diagnostics_json(const PolicyDecision& decision) {
  auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  nlohmann::json j;
  j["action"] = vec(decision.action);
  j["objective"] = decision.objective;
  j["status"] = std::string(to_string(decision.status));
  j["fallback"] = decision.fallback;
  j["initial"] = vec(decision.initial);
  j["iterations"] = nlohmann::json::array();
  for (const IterationRecord& rec : decision.iterations) {
    j["iterations"].push_back({{"k", rec.k},
                               {"step", rec.step},
                               {"batch", rec.batch},
                               {"iterate", vec(rec.iterate)},
                               {"status", std::string(to_string(rec.status))},
                               {"objective", rec.objective}});
  }
  return j.dump();
}

}  // namespace mfmpc
