#pragma once

#include "mfmpc/config.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <string>

namespace mfmpc {

inline constexpr int kSummarySchemaVersion = 1;

/// Prices after winsorization, split into training and test hours.
struct PreparedData {
  PriceSeries series;       // the first train_hours + test_hours hours
  double clip_level = 0.0;  // winsorization level
  std::size_t train_hours = 0;
  std::size_t test_hours = 0;
};

/// Loads `config.prices` (or synthesizes prices), winsorizes and checks that
/// the configured training and test hours are available.
[[nodiscard]] PreparedData prepare_data(const RunConfig& config);

/// `config.model` when set, otherwise a fit to the training hours.
[[nodiscard]] ForecastModel obtain_model(const RunConfig& config, const PreparedData& data);

/// Realized prices for simulating the test hours under `model`.
[[nodiscard]] MarketWindow test_window(const PreparedData& data, const ForecastModel& model);

// Commands. Each writes its artifacts below config.output_dir and returns
// the main artifact path.

/// <out>/prices.csv from the synth block.
std::filesystem::path cmd_synth(const RunConfig& config);

/// <out>/model.json, <out>/fit_report.json and <out>/rms_by_lead.csv. With
/// `train_csv` the whole file is training data and the fit is scored on it;
/// otherwise the fit uses the training hours and is scored on the test hours.
std::filesystem::path cmd_fit_forecast(const RunConfig& config,
                                       const std::optional<std::filesystem::path>& train_csv = std::nullopt);

/// <out>/<run_id>/summary.json, trials.csv and figure_data/*.csv.
std::filesystem::path cmd_simulate(const RunConfig& config);

/// <out>/<run_id>/prescient.json for the test hours.
std::filesystem::path cmd_prescient(const RunConfig& config);

/// <out>/comparison.csv and comparison.json from simulate summaries, which
/// must all come from the same price window.
std::filesystem::path cmd_compare(std::span<const std::filesystem::path> summaries,
                                  const std::filesystem::path& out_dir);

/// summary.json text with every "wall_clock" member removed, re-serialized.
[[nodiscard]] std::string strip_wall_clock(const std::string& summary_json);

}  // namespace mfmpc
