#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "dml4ssi/harness.hpp"

namespace dml4ssi {

// Invalid, unknown or mistyped configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Parsed run configuration. JSON with comments, three sections:
//   "dgp":        kind ("ade" | "switchback") plus the model's fields
//   "forest":     n_trees, max_depth (null = unlimited), min_samples_leaf,
//                 feature_fraction, bootstrap
//   "experiment": T, aux_T, R, alpha, base_seed, jobs, estimators,
//                 variance, oracle_nuisances, T_grid
// Missing keys keep their defaults; unknown keys are rejected.
struct CliConfig {
  Scenario scenario;
  std::vector<std::size_t> T_grid;  // nonempty selects a coverage sweep
};

CliConfig parse_config(std::string_view text, std::string_view origin = "<config>");
// A preset name (see preset_names) or a path to a config file.
CliConfig load_config(const std::string& name_or_path);

std::vector<std::string> preset_names();
std::optional<std::string_view> preset_text(std::string_view name);

// Seed precedence: flag, then DML4SSI_SEED, then the config value.
std::uint64_t resolve_seed(std::uint64_t config_seed, std::optional<std::uint64_t> flag,
                           const char* env_value);
std::uint64_t parse_seed(std::string_view text);  // throws ConfigError

}  // namespace dml4ssi
