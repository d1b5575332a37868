#include "mfmpc/commands.hpp"

#include "mfmpc/error.hpp"

#include <json.hpp>

#include <charconv>
#include <chrono>
#include <fstream>
#include <sstream>

namespace mfmpc {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::string num(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

void write_text(const fs::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("failed writing " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kind_label(PolicyKind k) {
  switch (k) {
    case PolicyKind::hold: return "hold";
    case PolicyKind::mpc: return "mpc";
    case PolicyKind::mf_mpc: return "mf_mpc";
    case PolicyKind::ip_mpc: return "ip_mpc";
  }
  return "";
}

void erase_wall_clock(json& j) {
  if (j.is_object()) {
    j.erase("wall_clock");
    for (auto& [k, v] : j.items()) erase_wall_clock(v);
  } else if (j.is_array()) {
    for (auto& v : j) erase_wall_clock(v);
  }
}

}  // namespace

PreparedData prepare_data(const RunConfig& config) {
  PriceSeries raw = config.prices ? load_prices(fs::path(*config.prices)) : synthesize_prices(config.synth);
  const std::size_t needed = config.train_hours + config.test_hours;
  if (raw.size() < needed) {
    throw DataError("price data has " + std::to_string(raw.size()) + " hours but train_hours + test_hours = " +
                    std::to_string(needed));
  }
  PreparedData d;
  d.series = slice(raw, 0, needed);
  d.clip_level = quantile(d.series.prices, config.winsorize_pct);
  d.series = winsorize_low(d.series, config.winsorize_pct);
  d.train_hours = config.train_hours;
  d.test_hours = config.test_hours;
  return d;
}

ForecastModel obtain_model(const RunConfig& config, const PreparedData& data) {
  if (config.model) return load_model(fs::path(*config.model));
  return fit_forecast(slice(data.series, 0, data.train_hours), data.clip_level, config.forecast);
}

MarketWindow test_window(const PreparedData& data, const ForecastModel& model) {
  MarketWindow w;
  w.prices = data.series.prices;
  w.first_t = data.series.hours.front() - model.origin_hour;
  w.start = data.train_hours;
  w.length = data.test_hours;
  return w;
}

fs::path cmd_synth(const RunConfig& config) {
  const PriceSeries s = synthesize_prices(config.synth);
  std::ostringstream out;
  write_prices(out, s);
  const fs::path path = fs::path(config.output_dir) / "prices.csv";
  write_text(path, out.str());
  return path;
}

fs::path cmd_fit_forecast(const RunConfig& config, const std::optional<fs::path>& train_csv) {
  PreparedData data;
  if (train_csv) {
    const PriceSeries raw = load_prices(*train_csv);
    if (raw.empty()) throw DataError(train_csv->string() + " holds no prices");
    data.clip_level = quantile(raw.prices, config.winsorize_pct);
    data.series = winsorize_low(raw, config.winsorize_pct);
    data.train_hours = raw.size();
  } else {
    data = prepare_data(config);
  }
  const ForecastModel model =
      config.model ? load_model(fs::path(*config.model))
                   : fit_forecast(slice(data.series, 0, data.train_hours), data.clip_level, config.forecast);

  const std::int64_t first_t = data.series.hours.front() - model.origin_hour;
  const bool on_test = data.test_hours > 0;
  const std::size_t begin = on_test ? data.train_hours : 0;
  const std::size_t end = data.train_hours + data.test_hours;
  const ForecastEvaluation train_ev = evaluate_forecast(model, data.series.prices, first_t, 0, data.train_hours);
  const ForecastEvaluation ev =
      on_test ? evaluate_forecast(model, data.series.prices, first_t, begin, end) : train_ev;

  const fs::path dir(config.output_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  save_model(dir / "model.json", model);

  std::vector<double> leads(ev.rms_by_lead.data(), ev.rms_by_lead.data() + ev.rms_by_lead.size());
  const json report{
      {"train_hours", data.train_hours},
      {"evaluation", on_test ? "test" : "train"},
      {"evaluation_hours", ev.hours},
      {"forecast_origins", ev.origins},
      {"clip_level", data.clip_level},
      {"baseline_rms_log_error_train", train_ev.baseline_rms},
      {"baseline_rms_log_error", ev.baseline_rms},
      {"forecast_rms_log_error", ev.forecast_rms},
      {"forecast_rms_by_lead", leads},
      {"ar_max_abs_coefficient", model.ar.gamma.cwiseAbs().maxCoeff()},
  };
  write_text(dir / "fit_report.json", report.dump(2) + "\n");

  std::string csv = "lead,rms_log_error,baseline_rms_log_error\n";
  for (std::size_t j = 0; j < leads.size(); ++j) {
    csv += std::to_string(j + 1) + "," + num(leads[j]) + "," + num(ev.baseline_rms) + "\n";
  }
  write_text(dir / "rms_by_lead.csv", csv);
  return dir / "model.json";
}

fs::path cmd_simulate(const RunConfig& config) {
  const auto clock_start = std::chrono::steady_clock::now();
  const PreparedData data = prepare_data(config);
  const ForecastModel model = obtain_model(config, data);
  const MarketWindow window = test_window(data, model);
  const double q0 = config.start_energy();
  const TrialSet set =
      run_trials(window, model, config.storage, q0, config.policies, config.trials, config.seed, config.threads);
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - clock_start).count();

  const fs::path dir = fs::path(config.output_dir) / config.run_id;

  std::string trials = "trial,seed,policy,hour,timestamp,price,energy,action,cost,fallback\n";
  for (std::size_t i = 0; i < set.results.size(); ++i) {
    for (const SimulationResult& r : set.results[i]) {
      for (std::size_t h = 0; h < r.hours.size(); ++h) {
        const HourRecord& rec = r.hours[h];
        trials += std::to_string(i) + "," + std::to_string(set.seeds[i]) + "," + r.policy + "," +
                  std::to_string(h) + "," + format_timestamp(data.series.hours[window.start + h]) + "," +
                  num(rec.price) + "," + num(rec.energy) + "," + num(rec.action) + "," + num(rec.cost) + "," +
                  (rec.fallback ? "1" : "0") + "\n";
      }
    }
  }
  write_text(dir / "trials.csv", trials);

  json policies = json::array();
  std::string costs = "policy,kind,scenarios,iterations,mean_cost_per_hour,std_dev\n";
  std::string trial_costs = "trial,policy,mean_cost_per_hour\n";
  for (std::size_t k = 0; k < set.summary.size(); ++k) {
    const PolicySummary& s = set.summary[k];
    const PolicySpec& spec = config.policies[k];
    std::size_t fallbacks = 0;
    for (const auto& trial : set.results) {
      for (const auto& rec : trial[k].hours) fallbacks += rec.fallback ? 1 : 0;
    }
    const int iterations = spec.kind == PolicyKind::ip_mpc ? spec.ip.iterations : 0;
    policies.push_back({{"name", s.policy},
                        {"kind", kind_label(spec.kind)},
                        {"scenarios", spec.scenario_demand()},
                        {"iterations", iterations},
                        {"mean_cost_per_hour", s.mean},
                        {"std_dev", s.std_dev},
                        {"trial_means", s.trial_means},
                        {"fallback_hours", fallbacks},
                        {"wall_clock", {{"mean_seconds_per_call", s.mean_seconds}}}});
    costs += s.policy + "," + kind_label(spec.kind) + "," + std::to_string(spec.scenario_demand()) + "," +
             std::to_string(iterations) + "," + num(s.mean) + "," + num(s.std_dev) + "\n";
    for (std::size_t i = 0; i < s.trial_means.size(); ++i) {
      trial_costs += std::to_string(i) + "," + s.policy + "," + num(s.trial_means[i]) + "\n";
    }
  }
  costs += "prescient,prescient,0,0," + num(set.prescient.cost_per_hour) + ",0\n";
  write_text(dir / "figure_data" / "policy_costs.csv", costs);
  write_text(dir / "figure_data" / "trial_costs.csv", trial_costs);

  json summary{
      {"schema_version", kSummarySchemaVersion},
      {"run_id", config.run_id},
      {"seed", config.seed},
      {"trials", config.trials},
      {"trial_seeds", set.seeds},
      {"window",
       {{"id", set.window_id},
        {"start", format_timestamp(data.series.hours[window.start])},
        {"hours", window.length}}},
      {"initial_energy", q0},
      {"policies", policies},
      {"prescient", {{"cost_per_hour", set.prescient.cost_per_hour}, {"total_cost", set.prescient.total_cost}}},
      {"config", json::parse(config_to_json(config))},
      {"wall_clock", {{"total_seconds", elapsed}, {"threads", config.threads}}},
  };
  // Results do not depend on the thread count, so it is reported with the timings.
  summary["config"].erase("threads");
  write_text(dir / "summary.json", summary.dump(2) + "\n");
  return dir / "summary.json";
}

fs::path cmd_prescient(const RunConfig& config) {
  const PreparedData data = prepare_data(config);
  if (data.test_hours == 0) throw DataError("test window is empty");
  const std::span<const double> test(data.series.prices.data() + data.train_hours, data.test_hours);
  const double q0 = config.start_energy();
  const PrescientResult bound = prescient_bound(config.storage, q0, test);

  const fs::path dir = fs::path(config.output_dir) / config.run_id;
  std::string schedule = "hour,timestamp,price,action\n";
  for (std::size_t h = 0; h < bound.schedule.size(); ++h) {
    schedule += std::to_string(h) + "," + format_timestamp(data.series.hours[data.train_hours + h]) + "," +
                num(test[h]) + "," + num(bound.schedule[h]) + "\n";
  }
  write_text(dir / "prescient_schedule.csv", schedule);
  const json report{{"start", format_timestamp(data.series.hours[data.train_hours])},
                    {"hours", data.test_hours},
                    {"initial_energy", q0},
                    {"cost_per_hour", bound.cost_per_hour},
                    {"total_cost", bound.total_cost}};
  write_text(dir / "prescient.json", report.dump(2) + "\n");
  return dir / "prescient.json";
}

fs::path cmd_compare(std::span<const fs::path> summaries, const fs::path& out_dir) {
  if (summaries.empty()) throw DataError("compare needs at least one summary.json");
  Comparison table;
  std::optional<double> prescient;
  for (const fs::path& path : summaries) {
    json s;
    try {
      s = json::parse(read_text(path));
      if (s.at("schema_version").get<int>() != kSummarySchemaVersion) {
        throw DataError(path.string() + ": unsupported schema_version");
      }
      const std::string id = s.at("window").at("id").get<std::string>();
      if (table.window_id.empty()) {
        table.window_id = id;
      } else if (id != table.window_id) {
        throw DataError(path.string() + " was simulated on a different price window");
      }
      for (const json& p : s.at("policies")) {
        table.rows.push_back({p.at("name").get<std::string>(), p.at("mean_cost_per_hour").get<double>(),
                              p.at("std_dev").get<double>(), static_cast<int>(p.at("trial_means").size())});
      }
      if (!prescient) prescient = s.at("prescient").at("cost_per_hour").get<double>();
    } catch (const json::exception& e) {
      throw DataError(path.string() + ": malformed summary (" + e.what() + ")");
    }
  }
  table.rows.push_back({"prescient", *prescient, 0.0, 1});
  write_text(out_dir / "comparison.csv", comparison_csv(table));
  write_text(out_dir / "comparison.json", comparison_json(table) + "\n");
  return out_dir / "comparison.csv";
}

std::string strip_wall_clock(const std::string& summary_json) {
  json j = json::parse(summary_json);
  erase_wall_clock(j);
  return j.dump(2);
}

}  // namespace mfmpc
