#pragma once

#include "mfmpc/forecast.hpp"
#include "mfmpc/policies.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mfmpc {

/// Thrown when a policy reads a realized price later than the current hour.
class CausalityError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Read access to realized prices up to and including the current hour.
class PriceFeed {
 public:
  PriceFeed(std::span<const double> prices, std::size_t now) : prices_(prices), now_(now) {}

  [[nodiscard]] std::size_t now() const { return now_; }
  [[nodiscard]] double at(std::size_t index) const {
    if (index > now_) {
      throw CausalityError("read of price " + std::to_string(index) + " during hour " + std::to_string(now_));
    }
    return prices_[index];
  }

 private:
  std::span<const double> prices_;
  std::size_t now_;
};

/// Realized prices around a simulated stretch. `prices[start]` is the first
/// simulated hour; the 23 hours before it supply the first residual window.
struct MarketWindow {
  std::vector<double> prices;
  std::int64_t first_t = 0;  // forecast-model hour index of prices[0]
  std::size_t start = 0;
  std::size_t length = 0;

  void validate() const;
  [[nodiscard]] std::span<const double> simulated() const { return {prices.data() + start, length}; }
};

/// What a policy may look at during hour t.
struct HourContext {
  std::int64_t t = 0;        // forecast-model hour index
  std::size_t hour = 0;      // 0-based hour of the simulation
  double energy = 0.0;       // q_t
  const PriceFeed& feed;
  /// Current price followed by the point forecast, one entry per planning hour.
  std::span<const double> forecast;
  /// Shared scenario draw for this hour (current price in column 0), or
  /// nullptr when no policy needs scenarios. Policies use a row prefix.
  const ScenarioSet* scenarios = nullptr;
};

using PolicyFn = std::function<PolicyDecision(const HourContext&)>;

enum class PolicyKind { hold, mpc, mf_mpc, ip_mpc };

struct PolicySpec {
  std::string name;
  PolicyKind kind = PolicyKind::mpc;
  int scenarios = 0;  // MF-MPC: S; IP-MPC: pool size, 0 for batch_size * iterations
  IpMpcConfig ip;

  /// Rows of the shared draw this policy reads.
  [[nodiscard]] int scenario_demand() const;
  void validate() const;
};

/// MPC, MF-MPC with S = 20, 40, ..., 640 and IP-MPC with b = 20 and
/// 1, 2, ..., 32 iterations (alpha_k = 7/k, cyclic, MPC start).
[[nodiscard]] std::vector<PolicySpec> standard_policies();

/// Display name such as "MF-MPC S=80"; `spec.name` wins when set.
[[nodiscard]] std::string policy_name(const PolicySpec& spec);

[[nodiscard]] PolicyFn make_policy(const PolicySpec& spec, const StorageSpec& storage);

struct NamedPolicy {
  std::string name;
  PolicyFn decide;
  int scenario_demand = 0;
};

struct HourRecord {
  double price = 0.0;
  double energy = 0.0;  // before the action
  double action = 0.0;
  double cost = 0.0;    // p_t (u_t + eta |u_t|) at the realized price
  bool fallback = false;
  double seconds = 0.0; // wall clock of the policy call
};

struct SimulationResult {
  std::string policy;
  std::uint64_t trial_seed = 0;
  std::vector<HourRecord> hours;
  double total_cost = 0.0;
  double mean_cost = 0.0;  // per hour
  double final_energy = 0.0;
  double mean_seconds = 0.0;
};

/// Closed-loop runs of every policy over the same realized prices. At each
/// hour one scenario block is drawn with seed derive_seed(trial_seed, t) and
/// shared by all policies, so results for a policy do not depend on which
/// other policies run alongside it. Throws SolverError naming the policy and
/// hour when a policy fails.
[[nodiscard]] std::vector<SimulationResult> simulate(const MarketWindow& window, const ForecastModel& model,
                                                     const StorageSpec& storage, double initial_energy,
                                                     std::span<const NamedPolicy> policies,
                                                     std::uint64_t trial_seed);

[[nodiscard]] SimulationResult simulate(const PolicySpec& policy, const MarketWindow& window,
                                        const ForecastModel& model, const StorageSpec& storage,
                                        double initial_energy, std::uint64_t trial_seed);

struct PolicySummary {
  std::string policy;
  std::vector<double> trial_means;
  double mean = 0.0;
  double std_dev = 0.0;  // sample standard deviation across trials, 0 for one trial
  double mean_seconds = 0.0;
};

struct TrialSet {
  std::vector<std::uint64_t> seeds;
  std::vector<std::vector<SimulationResult>> results;  // [trial][policy]
  std::vector<PolicySummary> summary;                   // per policy
  PrescientResult prescient;
  std::string window_id;  // identifies the realized prices
};

/// Trial i uses seed derive_seed(base_seed, i). Trials run on up to
/// `threads` threads; results do not depend on the thread count.
[[nodiscard]] TrialSet run_trials(const MarketWindow& window, const ForecastModel& model, const StorageSpec& storage,
                                  double initial_energy, std::span<const PolicySpec> policies, int n_trials,
                                  std::uint64_t base_seed, int threads = 1);

[[nodiscard]] PolicySummary summarize(std::string policy, std::span<const SimulationResult> trials);

struct ComparisonRow {
  std::string policy;
  double mean_cost = 0.0;
  double std_dev = 0.0;
  int trials = 0;
};

struct Comparison {
  std::vector<ComparisonRow> rows;  // policies, then the prescient bound
  std::string window_id;
};

/// Mean per-hour cost per policy plus a prescient row. Sets simulated on
/// different realized prices cannot be compared and throw DataError.
[[nodiscard]] Comparison compare(std::span<const TrialSet> sets);

[[nodiscard]] std::string comparison_csv(const Comparison& table);
[[nodiscard]] std::string comparison_json(const Comparison& table);

}  // namespace mfmpc
