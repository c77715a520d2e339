#pragma once

// Experiment configuration: a TOML subset with sections, `key = value`
// lines, numbers, quoted strings, booleans and flat numeric arrays.
// Every known key is listed once in the schema below; saving walks the
// same schema, so load -> save -> load is the identity.

#include "rmpc/dynamics.hpp"
#include "rmpc/oracle_cache.hpp"
#include "rmpc/policy.hpp"
#include "rmpc/sampler.hpp"
#include "rmpc/train.hpp"
#include "rmpc/utility.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace rmpc {

struct OracleConfig {
  std::string kind = "auto";  // auto | riccati | shooting
  ShootingOptions shooting;
};

struct EvalConfig {
  std::uint64_t seed = 1000003;  // held out from training seeds
  int instances = 100;
  std::vector<double> horizons;  // empty: 1..N_max
  int closed_loop_starts = 50;
  int steps = 200;
  std::vector<double> cycles{1, 3, 5, 7, 10};
  std::vector<double> budgets_ms{0.5, 1.5, 2.5, 3.5, 5.5, 7.5, 10.5, 20.0};
  double cycle_cost_ms = 1.0;
  std::vector<double> timing_horizons;  // empty: 1..N_max
  int timing_samples = 15;
  // Closed-loop scenario for simulate and sweeps.
  std::vector<double> scenario_x0;  // empty: zero state
  double scenario_amplitude = 1.0;
  double scenario_wavelength = 1.0;
  double scenario_phase = 0.0;
  bool oracle_closed_loop = true;  // oracle controller rows in the cost-to-go table

  bool operator==(const EvalConfig&) const = default;
};

struct PathsConfig {
  std::string output_dir = "runs/default";
  std::string cache_dir = "cache";
  bool operator==(const PathsConfig&) const = default;
};

struct ExperimentConfig {
  std::string model_kind = "double_integrator";
  std::map<std::string, double> model_params;

  double track_weight = 1.0;
  std::vector<double> state_weights;
  std::vector<double> control_weights;

  CellKind cell = CellKind::gated;
  int layers = 4;
  int hidden = 128;
  std::vector<double> output_scale;
  std::vector<double> input_scale;

  TrainingConfig training;

  std::vector<double> state_low;
  std::vector<double> state_high;
  int relative_component = -1;
  ReferenceFamily family = ReferenceFamily::sine;
  std::vector<double> amplitude{0.0, 1.0};
  std::vector<double> wavelength{1.0, 1.0};
  std::vector<double> phase{0.0, 2.0 * std::numbers::pi};
  double step_length = 1.0;
  std::vector<double> segment_steps{5, 20};
  std::string recorded_file;  // relative to the config file

  OracleConfig oracle;
  EvalConfig eval;
  std::map<std::string, std::vector<double>> sweep;
  PathsConfig paths;

  std::filesystem::path base_dir;  // directory of the loaded file; not serialized
};

namespace detail {

struct ConfigValue {
  enum Kind { number, string, boolean, array } kind = number;
  double num = 0.0;
  std::string str;
  bool flag = false;
  std::vector<double> arr;
  int line = 0;
};

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline bool parse_number(const std::string& text, double& out) {
  if (text.empty()) return false;
  char* end = nullptr;
  out = std::strtod(text.c_str(), &end);
  return end == text.c_str() + text.size();
}

inline ConfigValue parse_value(const std::string& raw, int line) {
  ConfigValue v;
  v.line = line;
  const std::string t = trim(raw);
  if (t.empty()) throw ConfigError("missing value", line);
  if (t.front() == '[') {
    if (t.back() != ']') throw ConfigError("unterminated array", line);
    v.kind = ConfigValue::array;
    const std::string body = trim(t.substr(1, t.size() - 2));
    if (body.empty()) return v;
    std::stringstream ss(body);
    std::string item;
    while (std::getline(ss, item, ',')) {
      double d;
      if (!parse_number(trim(item), d)) throw ConfigError("array element '" + trim(item) + "' is not a number", line);
      v.arr.push_back(d);
    }
    return v;
  }
  if (t.front() == '"') {
    if (t.size() < 2 || t.back() != '"') throw ConfigError("unterminated string", line);
    v.kind = ConfigValue::string;
    v.str = t.substr(1, t.size() - 2);
    if (v.str.find('"') != std::string::npos) throw ConfigError("embedded quote in string", line);
    return v;
  }
  if (t == "true" || t == "false") {
    v.kind = ConfigValue::boolean;
    v.flag = t == "true";
    return v;
  }
  if (parse_number(t, v.num)) return v;
  v.kind = ConfigValue::string;  // bare word
  v.str = t;
  return v;
}

// Strips a trailing comment that is not inside a string.
inline std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (!quoted && line[i] == '#') return line.substr(0, i);
  }
  return line;
}

inline double as_number(const ConfigValue& v, const std::string& key) {
  if (v.kind != ConfigValue::number) throw ConfigError("'" + key + "' expects a number", v.line);
  return v.num;
}

inline int as_int(const ConfigValue& v, const std::string& key) {
  const double d = as_number(v, key);
  if (d != std::floor(d) || std::abs(d) > 2e9) throw ConfigError("'" + key + "' expects an integer", v.line);
  return static_cast<int>(d);
}

inline long long as_count(const ConfigValue& v, const std::string& key) {
  const double d = as_number(v, key);
  if (d != std::floor(d) || d < 0 || d > 9e15) throw ConfigError("'" + key + "' expects a non-negative integer", v.line);
  return static_cast<long long>(d);
}

inline std::string as_string(const ConfigValue& v, const std::string& key) {
  if (v.kind != ConfigValue::string) throw ConfigError("'" + key + "' expects a string", v.line);
  return v.str;
}

inline bool as_bool(const ConfigValue& v, const std::string& key) {
  if (v.kind != ConfigValue::boolean) throw ConfigError("'" + key + "' expects true or false", v.line);
  return v.flag;
}

inline std::vector<double> as_array(const ConfigValue& v, const std::string& key) {
  if (v.kind != ConfigValue::array) throw ConfigError("'" + key + "' expects an array", v.line);
  return v.arr;
}

inline std::string quote(const std::string& s) { return "\"" + s + "\""; }

inline std::string array_text(const std::vector<double>& a) {
  std::string s = "[";
  for (std::size_t i = 0; i < a.size(); ++i) s += (i ? ", " : "") + fmt_double(a[i]);
  return s + "]";
}

inline std::string int_text(long long v) { return std::to_string(v); }

struct Field {
  std::string section;
  std::string key;
  std::function<void(const ConfigValue&)> set;
  std::function<std::string()> get;
};

template <class T>
Field num_field(const char* section, const char* key, T& ref) {
  return {section, key,
          [&ref, key](const ConfigValue& v) {
            if constexpr (std::is_same_v<T, double>)
              ref = as_number(v, key);
            else if constexpr (std::is_same_v<T, int>)
              ref = as_int(v, key);
            else
              ref = static_cast<T>(as_count(v, key));
          },
          [&ref] {
            if constexpr (std::is_same_v<T, double>)
              return fmt_double(ref);
            else
              return int_text(static_cast<long long>(ref));
          }};
}

inline Field arr_field(const char* section, const char* key, std::vector<double>& ref) {
  return {section, key, [&ref, key](const ConfigValue& v) { ref = as_array(v, key); },
          [&ref] { return array_text(ref); }};
}

inline Field str_field(const char* section, const char* key, std::string& ref) {
  return {section, key, [&ref, key](const ConfigValue& v) { ref = as_string(v, key); },
          [&ref] { return quote(ref); }};
}

inline std::vector<Field> schema(ExperimentConfig& c) {
  TrainingConfig& t = c.training;
  ShootingOptions& so = c.oracle.shooting;
  EvalConfig& e = c.eval;
  return {
      str_field("model", "kind", c.model_kind),

      num_field("utility", "track_weight", c.track_weight),
      arr_field("utility", "state_weights", c.state_weights),
      arr_field("utility", "control_weights", c.control_weights),

      {"policy", "cell", [&c](const ConfigValue& v) { c.cell = parse_cell_kind(as_string(v, "cell")); },
       [&c] { return quote(to_string(c.cell)); }},
      num_field("policy", "layers", c.layers),
      num_field("policy", "hidden", c.hidden),
      arr_field("policy", "output_scale", c.output_scale),
      arr_field("policy", "input_scale", c.input_scale),

      num_field("training", "horizon", t.horizon),
      num_field("training", "learning_rate", t.learning_rate),
      num_field("training", "batch_size", t.batch_size),
      {"training", "optimizer",
       [&t](const ConfigValue& v) { t.optimizer = parse_optimizer(as_string(v, "optimizer")); },
       [&t] { return quote(to_string(t.optimizer)); }},
      num_field("training", "epsilon", t.epsilon),
      num_field("training", "max_iterations", t.max_iterations),
      num_field("training", "seed", t.seed),
      num_field("training", "eval_every", t.eval_every),
      num_field("training", "clip_norm", t.clip_norm),
      num_field("training", "ema_window", t.ema_window),
      num_field("training", "max_consecutive_failures", t.max_consecutive_failures),

      arr_field("sampler", "state_low", c.state_low),
      arr_field("sampler", "state_high", c.state_high),
      num_field("sampler", "relative_component", c.relative_component),
      {"sampler", "family",
       [&c](const ConfigValue& v) { c.family = parse_reference_family(as_string(v, "family")); },
       [&c] { return quote(to_string(c.family)); }},
      arr_field("sampler", "amplitude", c.amplitude),
      arr_field("sampler", "wavelength", c.wavelength),
      arr_field("sampler", "phase", c.phase),
      num_field("sampler", "step_length", c.step_length),
      arr_field("sampler", "segment_steps", c.segment_steps),
      str_field("sampler", "recorded_file", c.recorded_file),

      str_field("oracle", "kind", c.oracle.kind),
      num_field("oracle", "restarts", so.restarts),
      num_field("oracle", "iterations", so.iterations),
      num_field("oracle", "step", so.step),
      {"oracle", "polish", [&so](const ConfigValue& v) { so.polish = as_bool(v, "polish"); },
       [&so] { return std::string(so.polish ? "true" : "false"); }},
      num_field("oracle", "polish_iterations", so.polish_iterations),
      num_field("oracle", "agree_tol", so.agree_tol),
      num_field("oracle", "seed", so.seed),

      num_field("eval", "seed", e.seed),
      num_field("eval", "instances", e.instances),
      arr_field("eval", "horizons", e.horizons),
      num_field("eval", "closed_loop_starts", e.closed_loop_starts),
      num_field("eval", "steps", e.steps),
      arr_field("eval", "cycles", e.cycles),
      arr_field("eval", "budgets_ms", e.budgets_ms),
      num_field("eval", "cycle_cost_ms", e.cycle_cost_ms),
      arr_field("eval", "timing_horizons", e.timing_horizons),
      num_field("eval", "timing_samples", e.timing_samples),
      arr_field("eval", "scenario_x0", e.scenario_x0),
      num_field("eval", "scenario_amplitude", e.scenario_amplitude),
      num_field("eval", "scenario_wavelength", e.scenario_wavelength),
      num_field("eval", "scenario_phase", e.scenario_phase),
      {"eval", "oracle_closed_loop", [&e](const ConfigValue& v) { e.oracle_closed_loop = as_bool(v, "oracle_closed_loop"); },
       [&e] { return std::string(e.oracle_closed_loop ? "true" : "false"); }},

      str_field("paths", "output_dir", c.paths.output_dir),
      str_field("paths", "cache_dir", c.paths.cache_dir),
  };
}

inline const std::vector<std::string>& section_order() {
  static const std::vector<std::string> order{"model",   "model.params", "utility", "policy", "training",
                                              "sampler", "oracle",       "eval",    "sweep",  "paths"};
  return order;
}

inline std::vector<std::string> known_model_params(const std::string& kind) {
  if (kind == "double_integrator" || kind == "scalar_cubic") return {"dt", "u_max"};
  if (kind == "bicycle") return {"vx", "k1", "k2", "mass", "a", "b", "iz", "mu", "frequency", "u_max"};
  return {};
}

}  // namespace detail

// ---------------------------------------------------------------------------

inline bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
  auto& ma = const_cast<ExperimentConfig&>(a);
  auto& mb = const_cast<ExperimentConfig&>(b);
  const auto fa = detail::schema(ma);
  const auto fb = detail::schema(mb);
  for (std::size_t i = 0; i < fa.size(); ++i)
    if (fa[i].get() != fb[i].get()) return false;
  return a.model_params == b.model_params && a.sweep == b.sweep;
}

// Canonical text; every key is written, in schema order.
inline std::string save_config_text(const ExperimentConfig& cfg) {
  auto& c = const_cast<ExperimentConfig&>(cfg);
  const auto fields = detail::schema(c);
  std::string out;
  for (const auto& section : detail::section_order()) {
    std::string body;
    if (section == "model.params") {
      for (const auto& [k, v] : c.model_params) body += k + " = " + fmt_double(v) + "\n";
    } else if (section == "sweep") {
      for (const auto& [k, v] : c.sweep) body += k + " = " + detail::array_text(v) + "\n";
    } else {
      for (const auto& f : fields)
        if (f.section == section) body += f.key + " = " + f.get() + "\n";
    }
    if (!out.empty()) out += "\n";
    out += "[" + section + "]\n" + body;
  }
  return out;
}

inline std::uint64_t config_hash(const ExperimentConfig& cfg) { return fnv1a64(save_config_text(cfg)); }

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::filesystem::path resolve_input(const ExperimentConfig& cfg, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() || cfg.base_dir.empty() ? path : cfg.base_dir / path;
}

inline std::vector<double> read_recorded_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open recorded reference file " + path.string());
  std::vector<double> out;
  std::string tok;
  while (in >> tok) {
    double d;
    if (!detail::parse_number(tok, d)) throw ConfigError("recorded reference file " + path.string() + ": bad value '" + tok + "'");
    out.push_back(d);
  }
  return out;
}

// Semantic checks that need the whole config.
inline void validate_config(const ExperimentConfig& c, const std::map<std::string, int>& lines = {}) {
  auto line_of = [&](const std::string& key) {
    auto it = lines.find(key);
    return it == lines.end() ? 0 : it->second;
  };
  const auto known = detail::known_model_params(c.model_kind);
  if (known.empty()) throw ConfigError("unknown model kind '" + c.model_kind + "'", line_of("model.kind"));
  for (const auto& [k, v] : c.model_params)
    if (std::find(known.begin(), known.end(), k) == known.end())
      throw ConfigError("unknown parameter '" + k + "' for model '" + c.model_kind + "'", line_of("model.params." + k));
  for (const auto& [k, v] : c.sweep)
    if (std::find(known.begin(), known.end(), k) == known.end())
      throw ConfigError("sweep over unknown parameter '" + k + "'", line_of("sweep." + k));
  for (const char* key : {"amplitude", "wavelength", "phase", "segment_steps"}) {
    const auto& v = std::string(key) == "amplitude"    ? c.amplitude
                    : std::string(key) == "wavelength" ? c.wavelength
                    : std::string(key) == "phase"      ? c.phase
                                                       : c.segment_steps;
    if (v.size() != 2) throw ConfigError(std::string("sampler.") + key + " must be [low, high]", line_of(std::string("sampler.") + key));
  }
  if (c.oracle.kind != "auto" && c.oracle.kind != "riccati" && c.oracle.kind != "shooting")
    throw ConfigError("oracle.kind must be auto, riccati or shooting", line_of("oracle.kind"));
  if (!c.recorded_file.empty() && !std::filesystem::exists(resolve_input(c, c.recorded_file)))
    throw ConfigError("referenced file does not exist: " + resolve_input(c, c.recorded_file).string(),
                      line_of("sampler.recorded_file"));
  if (c.family == ReferenceFamily::recorded && c.recorded_file.empty())
    throw ConfigError("sampler.family = recorded needs sampler.recorded_file", line_of("sampler.family"));
  for (double h : c.eval.horizons)
    if (h < 1 || h > c.training.horizon || h != std::floor(h))
      throw ConfigError("eval.horizons entries must be integers in [1, training.horizon]", line_of("eval.horizons"));
  for (double h : c.eval.cycles)
    if (h < 1 || h > c.training.horizon || h != std::floor(h))
      throw ConfigError("eval.cycles entries must be integers in [1, training.horizon]", line_of("eval.cycles"));
  for (double h : c.eval.timing_horizons)
    if (h < 1 || h > c.training.horizon || h != std::floor(h))
      throw ConfigError("eval.timing_horizons entries must be integers in [1, training.horizon]", line_of("eval.timing_horizons"));
  if (!std::is_sorted(c.eval.budgets_ms.begin(), c.eval.budgets_ms.end()))
    throw ConfigError("eval.budgets_ms must be ascending", line_of("eval.budgets_ms"));
  try {
    c.training.validate();
  } catch (const ContractViolation& e) {
    throw ConfigError(e.what(), line_of("training"));
  }
}

inline ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {}) {
  ExperimentConfig cfg;
  cfg.base_dir = base_dir;
  auto fields = detail::schema(cfg);
  std::map<std::string, int> lines;
  std::set<std::string> known_sections(detail::section_order().begin(), detail::section_order().end());
  std::string section;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = detail::trim(detail::strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("malformed section header", line_no);
      section = detail::trim(line.substr(1, line.size() - 2));
      if (!known_sections.count(section)) throw ConfigError("unknown section [" + section + "]", line_no);
      if (lines.count("[" + section + "]")) throw ConfigError("duplicate section [" + section + "]", line_no);
      lines["[" + section + "]"] = line_no;
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("expected 'key = value'", line_no);
    if (section.empty()) throw ConfigError("key outside of any section", line_no);
    const std::string key = detail::trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("empty key", line_no);
    const std::string full = section + "." + key;
    if (lines.count(full)) throw ConfigError("duplicate key '" + full + "'", line_no);
    lines[full] = line_no;
    const detail::ConfigValue value = detail::parse_value(line.substr(eq + 1), line_no);

    if (section == "model.params") {
      cfg.model_params[key] = detail::as_number(value, key);
      continue;
    }
    if (section == "sweep") {
      cfg.sweep[key] = detail::as_array(value, key);
      if (cfg.sweep[key].empty()) throw ConfigError("sweep '" + key + "' has no values", line_no);
      continue;
    }
    bool found = false;
    for (auto& f : fields) {
      if (f.section == section && f.key == key) {
        try {
          f.set(value);
        } catch (const ConfigError& e) {
          if (e.line() > 0) throw;
          throw ConfigError(e.what(), line_no);
        }
        found = true;
        break;
      }
    }
    if (!found) throw ConfigError("unknown key '" + key + "' in [" + section + "]", line_no);
  }
  validate_config(cfg, lines);
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_config(ss.str(), path.parent_path());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

inline void save_config(const std::filesystem::path& path, const ExperimentConfig& cfg) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << save_config_text(cfg);
}

// ---------------------------------------------------------------------------
// Builders.

inline ModelPtr build_model(const ExperimentConfig& c, const std::map<std::string, double>& extra = {}) {
  auto params = c.model_params;
  for (const auto& [k, v] : extra) params[k] = v;
  return make_model(c.model_kind, params);
}

inline std::shared_ptr<QuadraticTrackingUtility> build_utility(const ExperimentConfig& c, const SystemModel& model) {
  Vec q = c.state_weights.empty() ? Vec::Zero(model.state_dim())
                                  : Eigen::Map<const Vec>(c.state_weights.data(), c.state_weights.size()).eval();
  Vec rho = c.control_weights.empty()
                ? Vec::Zero(model.input_dim())
                : Eigen::Map<const Vec>(c.control_weights.data(), c.control_weights.size()).eval();
  if (q.size() != model.state_dim()) throw ConfigError("utility.state_weights must have one entry per state");
  if (rho.size() != model.input_dim()) throw ConfigError("utility.control_weights must have one entry per input");
  return make_tracking_utility(c.track_weight, q, rho);
}

inline PolicyShape build_policy_shape(const ExperimentConfig& c, const SystemModel& model) {
  PolicyShape s;
  s.cell = c.cell;
  s.layers = c.layers;
  s.hidden = c.hidden;
  s.state_dim = model.state_dim();
  s.ref_dim = 1;
  s.output_dim = model.input_dim();
  s.output_scale = c.output_scale.empty() ? model.u_max().eval()
                                          : Eigen::Map<const Vec>(c.output_scale.data(), c.output_scale.size()).eval();
  if (!c.input_scale.empty()) s.input_scale = Eigen::Map<const Vec>(c.input_scale.data(), c.input_scale.size());
  try {
    s.validate();
  } catch (const ContractViolation& e) {
    throw ConfigError(std::string("[policy] ") + e.what());
  }
  return s;
}

inline SamplerSpec build_sampler(const ExperimentConfig& c, const SystemModel& model) {
  SamplerSpec s;
  if (c.state_low.size() != static_cast<std::size_t>(model.state_dim()) || c.state_high.size() != c.state_low.size())
    throw ConfigError("sampler.state_low/state_high must have one entry per state");
  s.state_low = Eigen::Map<const Vec>(c.state_low.data(), c.state_low.size());
  s.state_high = Eigen::Map<const Vec>(c.state_high.data(), c.state_high.size());
  s.relative_component = c.relative_component;
  s.family = c.family;
  s.amplitude = {c.amplitude[0], c.amplitude[1]};
  s.wavelength = {c.wavelength[0], c.wavelength[1]};
  s.phase = {c.phase[0], c.phase[1]};
  s.step_length = c.step_length;
  s.segment_steps = {c.segment_steps[0], c.segment_steps[1]};
  if (!c.recorded_file.empty()) s.recorded = read_recorded_values(resolve_input(c, c.recorded_file));
  s.horizon = c.training.horizon;
  try {
    s.validate();
  } catch (const ContractViolation& e) {
    throw ConfigError(std::string("[sampler] ") + e.what());
  }
  return s;
}

// Distance travelled per step. The bicycle indexes its reference by
// distance, so a swept vx or frequency changes the spacing.
inline double reference_step_length(const ExperimentConfig& c, const SystemModel& model) {
  if (model.kind() == "bicycle") {
    const auto p = model.parameters();
    return p.at("vx") / p.at("frequency");
  }
  return c.step_length;
}

inline std::string oracle_tag(const ExperimentConfig& c, const SystemModel& model) {
  const bool linear = dynamic_cast<const LinearModel*>(&model) != nullptr;
  const std::string kind = c.oracle.kind == "auto" ? (linear ? "riccati" : "shooting") : c.oracle.kind;
  return kind == "riccati" ? std::string("riccati") : shooting_key(c.oracle.shooting);
}

inline OracleFn build_oracle(const ExperimentConfig& c, ModelPtr model, std::shared_ptr<const QuadraticTrackingUtility> utility,
                             int workers = 1) {
  const auto linear = std::dynamic_pointer_cast<const LinearModel>(model);
  const std::string kind = c.oracle.kind == "auto" ? (linear ? "riccati" : "shooting") : c.oracle.kind;
  if (kind == "riccati") {
    if (!linear) throw ConfigError("oracle.kind = riccati needs a linear model");
    return [linear, utility](const Vec& x0, const RefTraj& r, int n) { return solve_riccati(*linear, *utility, x0, r, n); };
  }
  ShootingOptions opts = c.oracle.shooting;
  opts.workers = workers;
  return [model, utility, opts](const Vec& x0, const RefTraj& r, int n) {
    return solve_shooting(*model, *utility, x0, r, n, opts);
  };
}

inline std::vector<int> horizon_list(const std::vector<double>& given, int n_max) {
  std::vector<int> out;
  if (given.empty())
    for (int n = 1; n <= n_max; ++n) out.push_back(n);
  else
    for (double h : given) out.push_back(static_cast<int>(h));
  return out;
}

}  // namespace rmpc
