#include "mfmpc/config.hpp"

#include "mfmpc/error.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>

namespace mfmpc {
namespace {

using nlohmann::json;

// Reads fields out of one JSON object, remembering which keys were consumed
// so that anything left over can be reported as unknown.
class Reader {
 public:
  Reader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError(where() + "expected an object");
  }

  [[nodiscard]] std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  [[nodiscard]] const json* find(const std::string& key) {
    seen_.insert(key);
    const auto it = obj_.find(key);
    return it == obj_.end() || it->is_null() ? nullptr : &*it;
  }

  void number(const std::string& key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) throw ConfigError(field(key) + ": expected a number");
      out = v->get<double>();
    }
  }

  void number(const std::string& key, std::optional<double>& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) throw ConfigError(field(key) + ": expected a number");
      out = v->get<double>();
    }
  }

  template <typename Int>
  void integer(const std::string& key, Int& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer()) throw ConfigError(field(key) + ": expected an integer");
      if constexpr (std::is_unsigned_v<Int>) {
        if (v->is_number_unsigned()) {
          out = v->get<Int>();
          return;
        }
        if (v->get<std::int64_t>() < 0) throw ConfigError(field(key) + ": must be nonnegative");
      }
      out = v->get<Int>();
    }
  }

  void boolean(const std::string& key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) throw ConfigError(field(key) + ": expected true or false");
      out = v->get<bool>();
    }
  }

  void string(const std::string& key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) throw ConfigError(field(key) + ": expected a string");
      out = v->get<std::string>();
    }
  }

  void string(const std::string& key, std::optional<std::string>& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) throw ConfigError(field(key) + ": expected a string");
      out = v->get<std::string>();
    }
  }

  void finish() const {
    for (const auto& [key, value] : obj_.items()) {
      if (!seen_.contains(key)) throw ConfigError(field(key) + ": unknown key");
    }
  }

 private:
  [[nodiscard]] std::string where() const { return path_.empty() ? "" : path_ + ": "; }

  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

PolicyKind parse_kind(const std::string& s, const std::string& field) {
  if (s == "mpc") return PolicyKind::mpc;
  if (s == "mf_mpc") return PolicyKind::mf_mpc;
  if (s == "ip_mpc") return PolicyKind::ip_mpc;
  if (s == "hold") return PolicyKind::hold;
  throw ConfigError(field + ": unknown policy kind '" + s + "' (mpc, mf_mpc, ip_mpc, hold)");
}

const char* kind_name(PolicyKind k) {
  switch (k) {
    case PolicyKind::hold: return "hold";
    case PolicyKind::mpc: return "mpc";
    case PolicyKind::mf_mpc: return "mf_mpc";
    case PolicyKind::ip_mpc: return "ip_mpc";
  }
  return "mpc";
}

PolicySpec parse_policy(const json& j, const std::string& path) {
  Reader r(j, path);
  PolicySpec p;
  std::string kind;
  r.string("kind", kind);
  if (kind.empty()) throw ConfigError(r.field("kind") + ": required");
  p.kind = parse_kind(kind, r.field("kind"));
  r.string("name", p.name);
  if (p.kind == PolicyKind::mf_mpc || p.kind == PolicyKind::ip_mpc) r.integer("scenarios", p.scenarios);
  if (p.kind == PolicyKind::ip_mpc) {
    r.integer("batch_size", p.ip.batch_size);
    r.integer("iterations", p.ip.iterations);
    r.number("step_alpha", p.ip.step_alpha);
    r.number("step_beta", p.ip.step_beta);
    r.integer("seed", p.ip.seed);
    std::string order = "cyclic";
    r.string("index_order", order);
    if (order == "cyclic") {
      p.ip.order = IndexOrder::cyclic;
    } else if (order == "random") {
      p.ip.order = IndexOrder::random;
    } else {
      throw ConfigError(r.field("index_order") + ": expected \"cyclic\" or \"random\"");
    }
    std::string init = "mpc_plan";
    r.string("init", init);
    if (init == "mpc_plan") {
      p.ip.init = IpMpcInit::mpc_plan;
    } else if (init == "zero") {
      p.ip.init = IpMpcInit::zero;
    } else {
      throw ConfigError(r.field("init") + ": expected \"mpc_plan\" or \"zero\"");
    }
  }
  r.finish();
  try {
    p.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return p;
}

nlohmann::ordered_json policy_json(const PolicySpec& p) {
  nlohmann::ordered_json j{{"kind", kind_name(p.kind)}};
  if (!p.name.empty()) j["name"] = p.name;
  if (p.kind == PolicyKind::mf_mpc) j["scenarios"] = p.scenarios;
  if (p.kind == PolicyKind::ip_mpc) {
    if (p.scenarios > 0) j["scenarios"] = p.scenarios;
    j["batch_size"] = p.ip.batch_size;
    j["iterations"] = p.ip.iterations;
    j["step_alpha"] = p.ip.step_alpha;
    j["step_beta"] = p.ip.step_beta;
    j["index_order"] = p.ip.order == IndexOrder::cyclic ? "cyclic" : "random";
    j["init"] = p.ip.init == IpMpcInit::mpc_plan ? "mpc_plan" : "zero";
    j["seed"] = p.ip.seed;
  }
  return j;
}

nlohmann::ordered_json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

}  // namespace

void RunConfig::validate() const {
  if (run_id.empty() || run_id.find_first_of("/\\") != std::string::npos || run_id == "." || run_id == "..") {
    throw ConfigError("run_id: must be a plain directory name");
  }
  if (!(winsorize_pct > 0.0 && winsorize_pct < 100.0)) throw ConfigError("winsorize_pct: must lie in (0, 100)");
  if (train_hours < 2 * kHoursPerWeek) throw ConfigError("train_hours: at least two weeks are needed");
  if (trials < 1) throw ConfigError("trials: must be at least 1");
  if (threads < 1) throw ConfigError("threads: must be at least 1");
  if (forecast.smoothing < 0.0) throw ConfigError("forecast.smoothing: must be nonnegative");
  if (forecast.baseline_ridge && *forecast.baseline_ridge < 0.0) {
    throw ConfigError("forecast.baseline_ridge: must be nonnegative");
  }
  if (forecast.ar_ridge && *forecast.ar_ridge < 0.0) throw ConfigError("forecast.ar_ridge: must be nonnegative");
  try {
    storage.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("storage: ") + e.what());
  }
  if (storage.horizon > kLeads + 1) throw ConfigError("storage.horizon: at most 24 hours are forecast");
  const double q0 = start_energy();
  if (!(q0 >= 0.0 && q0 <= storage.capacity)) throw ConfigError("storage.initial_energy: must lie in [0, capacity]");
  if (policies.empty()) throw ConfigError("policies: at least one policy is required");
  try {
    synth.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("synth: ") + e.what());
  }
}

RunConfig parse_config(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }

  RunConfig c;
  Reader r(doc, "");
  r.string("run_id", c.run_id);
  r.string("prices", c.prices);
  r.string("model", c.model);
  r.number("winsorize_pct", c.winsorize_pct);
  r.integer("train_hours", c.train_hours);
  r.integer("test_hours", c.test_hours);
  r.integer("trials", c.trials);
  r.integer("seed", c.seed);
  r.integer("threads", c.threads);
  r.string("output_dir", c.output_dir);

  if (const json* f = r.find("forecast")) {
    Reader fr(*f, "forecast");
    fr.number("baseline_ridge", c.forecast.baseline_ridge);
    fr.number("ar_ridge", c.forecast.ar_ridge);
    fr.number("smoothing", c.forecast.smoothing);
    fr.finish();
  }

  if (const json* s = r.find("storage")) {
    Reader sr(*s, "storage");
    sr.number("charge_rate", c.storage.charge_rate);
    sr.number("discharge_rate", c.storage.discharge_rate);
    sr.number("capacity", c.storage.capacity);
    sr.number("half_spread", c.storage.half_spread);
    sr.integer("horizon", c.storage.horizon);
    std::optional<double> target;
    sr.number("terminal_target", target);
    c.storage.terminal_target = target.value_or(c.storage.capacity / 2.0);
    sr.boolean("terminal", c.storage.terminal);
    sr.number("quadratic_penalty", c.storage.quadratic_penalty);
    sr.number("initial_energy", c.initial_energy);
    sr.finish();
  }

  if (const json* s = r.find("synth")) {
    Reader sr(*s, "synth");
    sr.string("start", c.synth.start);
    sr.integer("hours", c.synth.hours);
    sr.integer("seed", c.synth.seed);
    sr.number("level", c.synth.level);
    sr.number("daily_amplitude", c.synth.daily_amplitude);
    sr.number("weekly_amplitude", c.synth.weekly_amplitude);
    sr.number("yearly_amplitude", c.synth.yearly_amplitude);
    sr.number("ar_coefficient", c.synth.ar_coefficient);
    sr.number("noise_scale", c.synth.noise_scale);
    sr.number("peak_noise_factor", c.synth.peak_noise_factor);
    sr.number("spike_scale", c.synth.spike_scale);
    sr.finish();
    try {
      (void)parse_timestamp(c.synth.start);
    } catch (const DataError& e) {
      throw ConfigError(std::string("synth.start: ") + e.what());
    }
  }

  if (const json* p = r.find("policies")) {
    if (!p->is_array()) throw ConfigError("policies: expected an array");
    c.policies.clear();
    for (std::size_t i = 0; i < p->size(); ++i) {
      c.policies.push_back(parse_policy((*p)[i], "policies[" + std::to_string(i) + "]"));
    }
  }
  r.finish();
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_json(const RunConfig& c) {
  using json = nlohmann::ordered_json;
  json policies = json::array();
  for (const auto& p : c.policies) policies.push_back(policy_json(p));
  json j{
      {"run_id", c.run_id},
      {"prices", c.prices ? json(*c.prices) : json(nullptr)},
      {"model", c.model ? json(*c.model) : json(nullptr)},
      {"winsorize_pct", c.winsorize_pct},
      {"train_hours", c.train_hours},
      {"test_hours", c.test_hours},
      {"forecast",
       {{"baseline_ridge", optional_json(c.forecast.baseline_ridge)},
        {"ar_ridge", optional_json(c.forecast.ar_ridge)},
        {"smoothing", c.forecast.smoothing}}},
      {"storage",
       {{"charge_rate", c.storage.charge_rate},
        {"discharge_rate", c.storage.discharge_rate},
        {"capacity", c.storage.capacity},
        {"half_spread", c.storage.half_spread},
        {"horizon", c.storage.horizon},
        {"terminal_target", c.storage.terminal_target},
        {"terminal", c.storage.terminal},
        {"quadratic_penalty", c.storage.quadratic_penalty},
        {"initial_energy", c.start_energy()}}},
      {"synth",
       {{"start", c.synth.start},
        {"hours", c.synth.hours},
        {"seed", c.synth.seed},
        {"level", c.synth.level},
        {"daily_amplitude", c.synth.daily_amplitude},
        {"weekly_amplitude", c.synth.weekly_amplitude},
        {"yearly_amplitude", c.synth.yearly_amplitude},
        {"ar_coefficient", c.synth.ar_coefficient},
        {"noise_scale", c.synth.noise_scale},
        {"peak_noise_factor", c.synth.peak_noise_factor},
        {"spike_scale", c.synth.spike_scale}}},
      {"policies", policies},
      {"trials", c.trials},
      {"seed", c.seed},
      {"threads", c.threads},
      {"output_dir", c.output_dir},
  };
  return j.dump(2);
}

}  // namespace mfmpc
