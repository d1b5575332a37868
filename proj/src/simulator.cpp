#include "mfmpc/simulator.hpp"

#include "mfmpc/error.hpp"
#include "mfmpc/random.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <numeric>
#include <sstream>
#include <thread>

namespace mfmpc {

namespace {

std::string window_fingerprint(const MarketWindow& w) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xffU;
      h *= 0x100000001b3ULL;
    }
  };
  mix(static_cast<std::uint64_t>(w.first_t + static_cast<std::int64_t>(w.start)));
  mix(w.length);
  for (double p : w.simulated()) mix(std::bit_cast<std::uint64_t>(p));
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

ScenarioSet leading_block(const ScenarioSet& set, int rows, int cols) {
  ScenarioSet out;
  out.prices = set.prices.topLeftCorner(rows, cols);
  out.weights = set.weights.head(rows);
  return out;
}

}  // namespace

void MarketWindow::validate() const {
  if (start < static_cast<std::size_t>(kArWindow - 1)) {
    throw DataError("simulation needs 23 hours of price history before its first hour");
  }
  if (length == 0) throw DataError("simulation window is empty");
  if (start + length > prices.size()) throw DataError("simulation window extends past the price data");
  for (double p : prices) {
    if (!(p > 1.0) || !std::isfinite(p)) throw DataError("realized prices must exceed 1 (winsorize first)");
  }
}

int PolicySpec::scenario_demand() const {
  switch (kind) {
    case PolicyKind::mf_mpc:
      return scenarios;
    case PolicyKind::ip_mpc:
      return scenarios > 0 ? scenarios : ip.batch_size * std::max(ip.iterations, 1);
    default:
      return 0;
  }
}

void PolicySpec::validate() const {
  if (kind == PolicyKind::mf_mpc && scenarios < 1) throw ConfigError("MF-MPC needs at least one scenario");
  if (kind == PolicyKind::ip_mpc) {
    if (ip.iterations < 0) throw ConfigError("IP-MPC iteration count must be nonnegative");
    if (!(ip.step_alpha > 0.0) || !(ip.step_beta > -1.0)) throw ConfigError("IP-MPC step schedule must be positive");
    if (ip.batch_size < 1 || ip.batch_size > scenario_demand()) {
      throw ConfigError("IP-MPC batch size must lie in [1, scenario pool]");
    }
  }
}

std::vector<PolicySpec> standard_policies() {
  std::vector<PolicySpec> out;
  PolicySpec mpc;
  mpc.kind = PolicyKind::mpc;
  out.push_back(mpc);
  for (int s : {20, 40, 80, 160, 320, 640}) {
    PolicySpec p;
    p.kind = PolicyKind::mf_mpc;
    p.scenarios = s;
    out.push_back(p);
  }
  for (int k : {1, 2, 4, 8, 16, 32}) {
    PolicySpec p;
    p.kind = PolicyKind::ip_mpc;
    p.ip.batch_size = 20;
    p.ip.iterations = k;
    out.push_back(p);
  }
  return out;
}

std::string policy_name(const PolicySpec& spec) {
  if (!spec.name.empty()) return spec.name;
  switch (spec.kind) {
    case PolicyKind::hold:
      return "hold";
    case PolicyKind::mpc:
      return "MPC";
    case PolicyKind::mf_mpc:
      return "MF-MPC S=" + std::to_string(spec.scenarios);
    case PolicyKind::ip_mpc:
      return "IP-MPC K=" + std::to_string(spec.ip.iterations);
  }
  return "policy";
}

PolicyFn make_policy(const PolicySpec& spec, const StorageSpec& storage) {
  spec.validate();
  if (storage.horizon > kLeads + 1) throw ConfigError("planning horizon cannot exceed 24 hours of forecasts");
  const int H = storage.horizon;
  switch (spec.kind) {
    case PolicyKind::hold:
      return [](const HourContext&) {
        PolicyDecision d;
        d.action = Eigen::VectorXd::Zero(1);
        return d;
      };
    case PolicyKind::mpc:
      return [storage, H](const HourContext& ctx) {
        return mpc_policy(storage, ctx.energy, ctx.forecast.first(static_cast<std::size_t>(H)));
      };
    case PolicyKind::mf_mpc:
      return [storage, H, S = spec.scenarios](const HourContext& ctx) {
        return mf_mpc_policy(storage, ctx.energy, leading_block(*ctx.scenarios, S, H));
      };
    case PolicyKind::ip_mpc:
      return [storage, H, S = spec.scenario_demand(), config = spec.ip](const HourContext& ctx) {
        return ip_mpc_policy(storage, ctx.energy, leading_block(*ctx.scenarios, S, H), config,
                             ctx.forecast.first(static_cast<std::size_t>(H)));
      };
  }
  throw ConfigError("unknown policy kind");
}

std::vector<SimulationResult> simulate(const MarketWindow& window, const ForecastModel& model,
                                       const StorageSpec& storage, double initial_energy,
                                       std::span<const NamedPolicy> policies, std::uint64_t trial_seed) {
  window.validate();
  storage.validate();
  if (!(initial_energy >= 0.0 && initial_energy <= storage.capacity)) {
    throw ConfigError("initial energy must lie in [0, Q]");
  }
  int demand = 0;
  for (const auto& p : policies) demand = std::max(demand, p.scenario_demand);

  // The baseline depends on the model only, so it may be tabulated ahead.
  const std::size_t first = window.start - (kArWindow - 1);
  std::vector<double> baseline(window.start + window.length);
  for (std::size_t i = first; i < baseline.size(); ++i) {
    baseline[i] = model.baseline.value(static_cast<double>(window.first_t + static_cast<std::int64_t>(i)));
  }

  std::vector<SimulationResult> results(policies.size());
  std::vector<double> energy(policies.size(), initial_energy);
  for (std::size_t k = 0; k < policies.size(); ++k) {
    results[k].policy = policies[k].name;
    results[k].trial_seed = trial_seed;
    results[k].hours.reserve(window.length);
  }

  Eigen::VectorXd residual_window(kArWindow);
  std::vector<double> forecast(static_cast<std::size_t>(kLeads + 1));
  for (std::size_t h = 0; h < window.length; ++h) {
    const std::size_t now = window.start + h;
    const PriceFeed feed(window.prices, now);
    const std::int64_t t = window.first_t + static_cast<std::int64_t>(now);
    for (int j = 0; j < kArWindow; ++j) {
      const std::size_t idx = now + 1 - kArWindow + static_cast<std::size_t>(j);
      residual_window[j] = loglog(feed.at(idx)) - baseline[idx];
    }
    const double price = feed.at(now);
    const Eigen::VectorXd point = point_forecast(model, t, residual_window);
    forecast[0] = price;
    std::copy(point.begin(), point.end(), forecast.begin() + 1);
    std::optional<ScenarioSet> draw;
    if (demand > 0) {
      draw = sample_scenarios(model, t, residual_window, price, demand,
                              derive_seed(trial_seed, static_cast<std::uint64_t>(t)));
    }

    for (std::size_t k = 0; k < policies.size(); ++k) {
      const double q = energy[k];
      const HourContext ctx{t, h, q, feed, forecast, draw ? &*draw : nullptr};
      const auto tic = std::chrono::steady_clock::now();
      PolicyDecision d;
      try {
        d = policies[k].decide(ctx);
      } catch (const SolverError& e) {
        throw SolverError(policies[k].name + " failed at simulated hour " + std::to_string(h) + ": " + e.what());
      }
      const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - tic).count();
      // Solver tolerances can put the action a hair outside the box.
      const double u = std::clamp(d.action[0], std::max(-storage.discharge_rate, -q),
                                  std::min(storage.charge_rate, storage.capacity - q));
      HourRecord rec{price, q, u, price * (u + storage.half_spread * std::abs(u)), d.fallback, seconds};
      results[k].total_cost += rec.cost;
      results[k].mean_seconds += seconds;
      results[k].hours.push_back(rec);
      energy[k] = std::clamp(q + u, 0.0, storage.capacity);
    }
  }
  for (std::size_t k = 0; k < policies.size(); ++k) {
    const auto n = static_cast<double>(window.length);
    results[k].mean_cost = results[k].total_cost / n;
    results[k].mean_seconds /= n;
    results[k].final_energy = energy[k];
  }
  return results;
}

SimulationResult simulate(const PolicySpec& policy, const MarketWindow& window, const ForecastModel& model,
                          const StorageSpec& storage, double initial_energy, std::uint64_t trial_seed) {
  const NamedPolicy named{policy_name(policy), make_policy(policy, storage), policy.scenario_demand()};
  return simulate(window, model, storage, initial_energy, std::span<const NamedPolicy>(&named, 1), trial_seed)
      .front();
}

PolicySummary summarize(std::string policy, std::span<const SimulationResult> trials) {
  PolicySummary s;
  s.policy = std::move(policy);
  for (const auto& r : trials) {
    s.trial_means.push_back(r.mean_cost);
    s.mean_seconds += r.mean_seconds / static_cast<double>(trials.size());
  }
  const auto n = static_cast<double>(trials.size());
  s.mean = std::accumulate(s.trial_means.begin(), s.trial_means.end(), 0.0) / n;
  if (trials.size() > 1) {
    double ss = 0.0;
    for (double m : s.trial_means) ss += (m - s.mean) * (m - s.mean);
    s.std_dev = std::sqrt(ss / (n - 1.0));
  }
  return s;
}

TrialSet run_trials(const MarketWindow& window, const ForecastModel& model, const StorageSpec& storage,
                    double initial_energy, std::span<const PolicySpec> policies, int n_trials,
                    std::uint64_t base_seed, int threads) {
  if (n_trials < 1) throw ConfigError("at least one trial is required");
  if (policies.empty()) throw ConfigError("no policies to simulate");
  window.validate();
  std::vector<NamedPolicy> named;
  for (const auto& p : policies) named.push_back({policy_name(p), make_policy(p, storage), p.scenario_demand()});

  TrialSet set;
  set.window_id = window_fingerprint(window);
  for (int i = 0; i < n_trials; ++i) set.seeds.push_back(derive_seed(base_seed, static_cast<std::uint64_t>(i)));
  set.results.resize(static_cast<std::size_t>(n_trials));

  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n_trials));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next++; i < n_trials; i = next++) {
      const auto idx = static_cast<std::size_t>(i);
      try {
        set.results[idx] = simulate(window, model, storage, initial_energy, named, set.seeds[idx]);
      } catch (...) {
        errors[idx] = std::current_exception();
      }
    }
  };
  const int workers = std::clamp(threads, 1, n_trials);
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  for (std::size_t k = 0; k < named.size(); ++k) {
    std::vector<SimulationResult> column;
    for (const auto& trial : set.results) column.push_back(trial[k]);
    set.summary.push_back(summarize(named[k].name, column));
  }
  set.prescient = prescient_bound(storage, initial_energy, window.simulated());
  return set;
}

Comparison compare(std::span<const TrialSet> sets) {
  if (sets.empty()) throw DataError("nothing to compare");
  Comparison table;
  table.window_id = sets.front().window_id;
  for (const auto& s : sets) {
    if (s.window_id != table.window_id) throw DataError("trial sets were simulated on different price windows");
    for (const auto& p : s.summary) {
      table.rows.push_back({p.policy, p.mean, p.std_dev, static_cast<int>(p.trial_means.size())});
    }
  }
  table.rows.push_back({"prescient", sets.front().prescient.cost_per_hour, 0.0, 1});
  return table;
}

std::string comparison_csv(const Comparison& table) {
  std::ostringstream out;
  out.precision(17);
  out << "policy,mean_cost_per_hour,std_dev,trials\n";
  for (const auto& r : table.rows) out << r.policy << ',' << r.mean_cost << ',' << r.std_dev << ',' << r.trials << '\n';
  return out.str();
}

std::string comparison_json(const Comparison& table) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : table.rows) {
    rows.push_back({{"policy", r.policy}, {"mean_cost_per_hour", r.mean_cost}, {"std_dev", r.std_dev},
                    {"trials", r.trials}});
  }
  return nlohmann::json{{"window_id", table.window_id}, {"rows", rows}}.dump(2);
}

}  // namespace mfmpc
