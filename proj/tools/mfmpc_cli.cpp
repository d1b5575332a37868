#include "mfmpc/commands.hpp"
#include "mfmpc/error.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

enum ExitCode { kOk = 0, kConfigError = 2, kDataError = 3, kSolverError = 4 };

struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<std::string> out;
  std::optional<double> winsorize_pct;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config_path, "JSON run configuration (defaults apply when omitted)");
  cmd->add_option("--seed", o.seed, "Base seed");
  cmd->add_option("--threads", o.threads, "Worker threads for trials");
  cmd->add_option("--out", o.out, "Output directory");
  cmd->add_option("--winsorize-pct", o.winsorize_pct, "Lower winsorization percentile");
}

mfmpc::RunConfig resolve(const Overrides& o) {
  mfmpc::RunConfig c = o.config_path.empty() ? mfmpc::parse_config("{}") : mfmpc::load_config(o.config_path);
  if (o.seed) c.seed = *o.seed;
  if (o.threads) c.threads = *o.threads;
  if (o.out) c.output_dir = *o.out;
  if (o.winsorize_pct) c.winsorize_pct = *o.winsorize_pct;
  c.validate();
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-forecast MPC for energy storage arbitrage"};
  app.require_subcommand(1);

  Overrides o;
  auto* synth = app.add_subcommand("synth", "Write synthetic hourly prices to <out>/prices.csv");
  auto* fit = app.add_subcommand("fit-forecast", "Fit the price forecaster and write model.json with a fit report");
  auto* sim = app.add_subcommand("simulate", "Simulate the configured policies over the test window");
  auto* presc = app.add_subcommand("prescient", "Compute the prescient bound on the test window");
  auto* cmp = app.add_subcommand("compare", "Tabulate policy costs from simulate summaries");
  for (auto* cmd : {synth, fit, sim, presc}) add_common(cmd, o);

  std::optional<std::string> train;
  std::optional<double> ridge;
  std::optional<double> smoothing;
  fit->add_option("--train", train, "Training CSV (timestamp,price); the whole file is used");
  fit->add_option("--ridge", ridge, "Ridge penalty for the baseline and AR fits");
  fit->add_option("--smoothing", smoothing, "Covariance smoothing across hours of the week");

  std::vector<std::string> summaries;
  std::string compare_out = ".";
  cmp->add_option("summaries", summaries, "summary.json files")->required();
  cmp->add_option("--out", compare_out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*cmp) {
      const std::vector<std::filesystem::path> paths(summaries.begin(), summaries.end());
      std::cout << mfmpc::cmd_compare(paths, compare_out).string() << "\n";
      return kOk;
    }
    mfmpc::RunConfig config = resolve(o);
    std::filesystem::path written;
    if (*synth) {
      if (o.seed) config.synth.seed = *o.seed;
      written = mfmpc::cmd_synth(config);
    } else if (*fit) {
      if (ridge) config.forecast.baseline_ridge = config.forecast.ar_ridge = *ridge;
      if (smoothing) config.forecast.smoothing = *smoothing;
      config.validate();
      written = mfmpc::cmd_fit_forecast(config, train ? std::optional<std::filesystem::path>(*train) : std::nullopt);
    } else if (*sim) {
      written = mfmpc::cmd_simulate(config);
    } else {
      written = mfmpc::cmd_prescient(config);
    }
    std::cout << written.string() << "\n";
    return kOk;
  } catch (const mfmpc::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const mfmpc::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const mfmpc::SolverError& e) {
    std::cerr << "solver failure: " << e.what() << "\n";
    return kSolverError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
