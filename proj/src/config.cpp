#include "dml4ssi/config.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "presets_embedded.inc"

namespace dml4ssi {
namespace {

using nlohmann::json;

struct PresetEntry {
  std::string_view name;
  std::string_view text;
};

constexpr PresetEntry kPresets[] = {
    {"ade-bias", kPresetAdeBias},
    {"ade-coverage-sweep", kPresetAdeCoverageSweep},
    {"sb-bias", kPresetSbBias},
    {"sb-coverage-sweep", kPresetSbCoverageSweep},
};

// Reads typed fields from one JSON object and rejects keys nobody asked for.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    out = convert<T>(*it, path_ + "." + key);
  }

  bool has(const char* key) const { return j_.contains(key); }
  const json& raw(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }
  std::string child(const char* key) const { return path_ + "." + key; }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError(path_ + ": unknown key '" + key + "'");
    }
  }

  template <class T>
  static T convert(const json& v, const std::string& where) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(where + ": expected a boolean");
      return v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(where + ": expected a string");
      return v.get<std::string>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(where + ": expected a number");
      return v.get<T>();
    } else if constexpr (std::is_same_v<T, std::optional<std::size_t>>) {
      if (v.is_null()) return std::nullopt;
      return convert<std::size_t>(v, where);
    } else {
      static_assert(std::is_unsigned_v<T>);
      if (!v.is_number_unsigned()) {
        if (v.is_number_integer()) throw ConfigError(where + ": must be nonnegative");
        throw ConfigError(where + ": expected a nonnegative integer");
      }
      return v.get<T>();
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

H0Mode parse_h0(const json& j, const std::string& where) {
  Section s(j, where);
  std::string kind;
  s.get("kind", kind);
  H0Mode mode;
  if (kind == "deterministic") {
    double v = 1.0;
    s.get("value", v);
    mode = H0Mode::Deterministic(v);
  } else if (kind == "stationary-draw") {
    mode = H0Mode::StationaryDraw();
  } else {
    throw ConfigError(where + ".kind: expected 'deterministic' or 'stationary-draw'");
  }
  s.finish();
  return mode;
}

DgpConfig parse_dgp(const json& j) {
  Section s(j, "dgp");
  std::string kind = "ade";
  s.get("kind", kind);
  if (kind == "ade") {
    AdeDgpConfig c;
    s.get("p_X", c.p_x);
    s.get("x_mean", c.x_mean);
    s.get("x_sd", c.x_sd);
    s.get("zeta", c.zeta);
    s.get("ar_coef", c.ar_coef);
    s.get("h_noise_sd", c.h_noise_sd);
    s.get("y_noise_sd", c.y_noise_sd);
    s.get("direct_coef", c.direct_coef);
    s.get("interaction_coef", c.interaction_coef);
    s.get("intercept", c.intercept);
    if (s.has("h0_mode")) c.h0_mode = parse_h0(s.raw("h0_mode"), s.child("h0_mode"));
    s.finish();
    return c;
  }
  if (kind == "switchback") {
    SwitchbackDgpConfig c;
    s.get("p_X", c.p_x);
    s.get("y_noise_sd", c.y_noise_sd);
    s.get("spill_coef", c.spill_coef);
    s.get("spill_scale", c.spill_scale);
    s.get("direct_coef", c.direct_coef);
    s.get("intercept", c.intercept);
    if (s.has("design")) {
      Section d(s.raw("design"), s.child("design"));
      d.get("m", c.design.m);
      d.get("block_len", c.design.block_len);
      d.get("treat_prob", c.design.treat_prob);
      d.finish();
    }
    s.finish();
    return c;
  }
  throw ConfigError("dgp.kind: expected 'ade' or 'switchback', got '" + kind + "'");
}

void parse_forest(const json& j, ForestParams& p) {
  Section s(j, "forest");
  s.get("n_trees", p.n_trees);
  s.get("max_depth", p.max_depth);
  s.get("min_samples_leaf", p.min_samples_leaf);
  s.get("feature_fraction", p.feature_fraction);
  s.get("bootstrap", p.bootstrap);
  s.finish();
}

EstimatorKind parse_estimator_or_throw(const json& v, const std::string& where) {
  const std::string label = Section::convert<std::string>(v, where);
  const auto k = parse_estimator(label);
  if (!k) throw ConfigError(where + ": unknown estimator '" + label + "'");
  return *k;
}

VarianceMethod parse_variance(const json& j, const std::string& where) {
  Section s(j, where);
  std::string kind;
  s.get("kind", kind);
  VarianceMethod m;
  if (kind == "batch-means") {
    m = VarianceMethod::BatchMeans();
    s.get("theta", m.theta);
  } else if (kind == "m-dependent") {
    m = VarianceMethod::MDependent(0);
    if (!s.has("m")) throw ConfigError(where + ": m-dependent variance needs 'm'");
    s.get("m", m.m);
  } else if (kind == "iid-plugin") {
    m = VarianceMethod::IidPlugin();
  } else if (kind == "ht-plugin") {
    m = VarianceMethod::HtPlugin();
  } else {
    throw ConfigError(where + ".kind: expected batch-means, m-dependent, iid-plugin or ht-plugin");
  }
  s.finish();
  return m;
}

void parse_experiment(const json& j, CliConfig& cfg) {
  Scenario& sc = cfg.scenario;
  Section s(j, "experiment");
  s.get("T", sc.T);
  s.get("aux_T", sc.aux_T);
  s.get("R", sc.R);
  s.get("alpha", sc.alpha);
  s.get("base_seed", sc.base_seed);
  s.get("jobs", sc.jobs);
  s.get("oracle_nuisances", sc.oracle_nuisances);
  if (s.has("estimators")) {
    const json& list = s.raw("estimators");
    if (!list.is_array()) throw ConfigError("experiment.estimators: expected an array");
    sc.estimators.clear();
    for (std::size_t i = 0; i < list.size(); ++i) {
      const EstimatorKind k =
          parse_estimator_or_throw(list[i], "experiment.estimators[" + std::to_string(i) + "]");
      if (std::find(sc.estimators.begin(), sc.estimators.end(), k) != sc.estimators.end()) {
        throw ConfigError("experiment.estimators: duplicate '" + std::string(estimator_label(k)) + "'");
      }
      sc.estimators.push_back(k);
    }
  }
  if (s.has("variance")) {
    const json& map = s.raw("variance");
    if (!map.is_object()) throw ConfigError("experiment.variance: expected an object");
    for (const auto& [label, v] : map.items()) {
      const auto k = parse_estimator(label);
      if (!k) throw ConfigError("experiment.variance: unknown estimator '" + label + "'");
      sc.variance[*k] = parse_variance(v, "experiment.variance." + label);
    }
  }
  if (s.has("T_grid")) {
    const json& grid = s.raw("T_grid");
    if (!grid.is_array()) throw ConfigError("experiment.T_grid: expected an array");
    for (std::size_t i = 0; i < grid.size(); ++i) {
      cfg.T_grid.push_back(
          Section::convert<std::size_t>(grid[i], "experiment.T_grid[" + std::to_string(i) + "]"));
    }
    if (cfg.T_grid.empty()) throw ConfigError("experiment.T_grid: must not be empty");
    for (std::size_t i = 1; i < cfg.T_grid.size(); ++i) {
      if (cfg.T_grid[i] <= cfg.T_grid[i - 1]) throw ConfigError("experiment.T_grid: must be increasing");
    }
  }
  s.finish();
}

}  // namespace

CliConfig parse_config(std::string_view text, std::string_view origin) {
  json root;
  try {
    root = json::parse(text, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string(origin) + ": " + e.what());
  }
  CliConfig cfg;
  try {
    Section top(root, std::string(origin));
    if (top.has("dgp")) cfg.scenario.dgp = parse_dgp(top.raw("dgp"));
    if (top.has("forest")) parse_forest(top.raw("forest"), cfg.scenario.forest);
    if (top.has("experiment")) parse_experiment(top.raw("experiment"), cfg);
    top.finish();
    cfg.scenario.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    // Domain validation errors name the violated invariant.
    throw ConfigError(std::string(origin) + ": " + e.what());
  }
  return cfg;
}

CliConfig load_config(const std::string& name_or_path) {
  if (const auto text = preset_text(name_or_path)) return parse_config(*text, name_or_path);
  std::ifstream in(name_or_path);
  if (!in) throw ConfigError("cannot open config '" + name_or_path + "' (not a file or preset)");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), name_or_path);
}

std::vector<std::string> preset_names() {
  std::vector<std::string> out;
  for (const auto& p : kPresets) out.emplace_back(p.name);
  return out;
}

std::optional<std::string_view> preset_text(std::string_view name) {
  for (const auto& p : kPresets) {
    if (p.name == name) return p.text;
  }
  return std::nullopt;
}

std::uint64_t parse_seed(std::string_view text) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
    throw ConfigError("invalid seed '" + std::string(text) + "'");
  }
  return v;
}

std::uint64_t resolve_seed(std::uint64_t config_seed, std::optional<std::uint64_t> flag,
                           const char* env_value) {
  if (flag) return *flag;
  if (env_value && *env_value) return parse_seed(env_value);
  return config_seed;
}

}  // namespace dml4ssi
