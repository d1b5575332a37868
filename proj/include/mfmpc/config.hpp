#pragma once

#include "mfmpc/forecast.hpp"
#include "mfmpc/simulator.hpp"
#include "mfmpc/synth.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace mfmpc {

/// Everything a command needs, read from one JSON document. Every field has
/// a default, so `{}` runs the full pipeline on synthetic prices.
struct RunConfig {
  std::string run_id = "default";
  std::optional<std::string> prices;  // CSV path; synthetic prices when absent
  std::optional<std::string> model;   // fitted model.json; fitted from the training data when absent
  SynthSpec synth;
  double winsorize_pct = 0.2;
  std::size_t train_hours = 43680;    // 260 weeks
  std::size_t test_hours = 1344;      // 8 weeks
  ForecastSettings forecast;
  StorageSpec storage;
  std::optional<double> initial_energy;  // capacity / 2 when absent
  std::vector<PolicySpec> policies = standard_policies();
  int trials = 10;
  std::uint64_t seed = 1;
  int threads = 1;
  std::string output_dir = "results";

  [[nodiscard]] double start_energy() const { return initial_energy.value_or(storage.capacity / 2.0); }
  void validate() const;
};

/// Parses and validates a config. Unknown keys, wrong types and invalid
/// values throw ConfigError naming the offending field, e.g. "storage.capacity".
[[nodiscard]] RunConfig parse_config(const std::string& json_text);
[[nodiscard]] RunConfig load_config(const std::filesystem::path& path);

/// The config with every default filled in, as JSON.
[[nodiscard]] std::string config_to_json(const RunConfig& config);

}  // namespace mfmpc
