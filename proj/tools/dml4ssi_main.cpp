// Command-line front end.
// Exit codes: 0 success, 1 usage, 2 config or schema error, 3 runtime error.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "dml4ssi/config.hpp"
#include "dml4ssi/harness.hpp"
#include "dml4ssi/trajectory_csv.hpp"

namespace fs = std::filesystem;
using namespace dml4ssi;

namespace {

constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kConfig = 2;
constexpr int kRuntime = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

CliConfig load_with_seed(const std::string& config, const std::optional<std::string>& seed_flag) {
  CliConfig cfg = load_config(config);
  std::optional<std::uint64_t> flag;
  if (seed_flag) flag = parse_seed(*seed_flag);
  cfg.scenario.base_seed = resolve_seed(cfg.scenario.base_seed, flag, std::getenv("DML4SSI_SEED"));
  return cfg;
}

Regime regime_of(const DgpConfig& dgp) {
  if (const auto* sb = std::get_if<SwitchbackDgpConfig>(&dgp)) return Regime::MDependent(sb->design.m);
  return Regime::GeometricErgodic();
}

std::optional<SwitchbackDesign> design_of(const DgpConfig& dgp) {
  if (const auto* sb = std::get_if<SwitchbackDgpConfig>(&dgp)) return sb->design;
  return std::nullopt;
}

Trajectory simulate_from(const CliConfig& cfg) {
  const RngStream stream{cfg.scenario.base_seed, 0};
  if (const auto* ade = std::get_if<AdeDgpConfig>(&cfg.scenario.dgp)) {
    return simulate_ade_dgp(*ade, cfg.scenario.T, stream);
  }
  return simulate_switchback_dgp(std::get<SwitchbackDgpConfig>(cfg.scenario.dgp), cfg.scenario.T, stream);
}

Trajectory read_validated(const std::string& path, const DgpConfig& dgp) {
  Trajectory traj = read_trajectory_csv(fs::path(path), regime_of(dgp), design_of(dgp));
  const ValidationResult v = validate_trajectory(traj);
  if (!v.ok()) throw SchemaError(path + ": " + v.summary());
  return traj;
}

int cmd_simulate(const std::string& config, const std::string& out,
                 const std::optional<std::string>& seed) {
  const CliConfig cfg = load_with_seed(config, seed);
  const Trajectory traj = simulate_from(cfg);
  write_trajectory_csv(traj, fs::path(out));
  return kOk;
}

int cmd_estimate(const std::string& config, const std::string& traj_path, const std::string& aux_path,
                 const std::string& out, const std::optional<std::string>& seed) {
  const CliConfig cfg = load_with_seed(config, seed);
  std::error_code ec;
  if (traj_path == aux_path || fs::equivalent(traj_path, aux_path, ec)) {
    std::cerr << "warning: auxiliary and inference trajectories are the same file; "
                 "nuisance estimates are not independent of the inference sample\n";
  }
  const Trajectory traj = read_validated(traj_path, cfg.scenario.dgp);
  const Trajectory aux = read_validated(aux_path, cfg.scenario.dgp);
  const EstimationRun run =
      estimate_trajectory(cfg.scenario, traj, aux, RngStream{cfg.scenario.base_seed, 1});

  std::ofstream os(out, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + out + " for writing");
  os << "estimator,psi_hat,sigma2_hat,ci_low,ci_high,alpha,T,degenerate\n";
  for (const auto& [kind, o] : run.outcomes) {
    const EstimateReport& r = o.report;
    os << r.estimator << ',' << format_double(r.psi_hat) << ',' << format_double(r.sigma2_hat) << ','
       << format_double(r.ci_low) << ',' << format_double(r.ci_high) << ',' << format_double(r.alpha)
       << ',' << r.T << ',' << (r.degenerate ? 1 : 0) << '\n';
  }
  os.flush();
  if (!os) throw std::runtime_error("write failed: " + out);
  for (const auto& [kind, why] : run.failures) {
    std::cerr << "error: " << estimator_label(kind) << ": " << why << '\n';
  }
  if (!run.failures.empty()) return kRuntime;
  return kOk;
}

// Run description next to the CSVs. Not byte-stable: includes wall time.
void write_metadata(const Scenario& sc, const std::vector<std::size_t>& grid, double wall_seconds,
                    const fs::path& path) {
  nlohmann::ordered_json j;
  j["dgp"] = is_switchback(sc.dgp) ? "switchback" : "ade";
  j["T"] = sc.T;
  j["aux_T"] = sc.aux_T;
  if (!grid.empty()) j["T_grid"] = grid;
  j["R"] = sc.R;
  j["alpha"] = sc.alpha;
  j["base_seed"] = sc.base_seed;
  j["jobs"] = sc.jobs;
  j["oracle_nuisances"] = sc.oracle_nuisances;
  j["forest_trees"] = sc.forest.n_trees;
  auto& est = j["estimators"];
  est = nlohmann::ordered_json::array();
  for (EstimatorKind k : kAllEstimators) {
    if (std::find(sc.estimators.begin(), sc.estimators.end(), k) == sc.estimators.end()) continue;
    nlohmann::ordered_json e;
    e["label"] = estimator_label(k);
    e["variance"] = sc.variance_for(k).describe();
    if (k == EstimatorKind::kSbHt) {
      e["note"] = "m-dependent variance substituted for the conservative switchback variance";
    }
    est.push_back(e);
  }
  j["wall_seconds"] = wall_seconds;
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os << j.dump(2) << '\n';
}

int cmd_experiment(const std::string& config, const std::string& out_dir,
                   const std::optional<std::size_t>& jobs, const std::optional<std::string>& seed) {
  CliConfig cfg = load_with_seed(config, seed);
  if (jobs) {
    if (*jobs == 0) throw UsageError("--jobs must be positive");
    cfg.scenario.jobs = *jobs;
  }
  const fs::path dir(out_dir);
  if (cfg.T_grid.empty()) {
    const ExperimentReport report = run_experiment(cfg.scenario);
    emit_csv(report, dir);
    write_metadata(cfg.scenario, {}, report.wall_seconds, dir / "metadata.json");
    std::cerr << "experiment: R=" << cfg.scenario.R << " T=" << cfg.scenario.T << " in "
              << report.wall_seconds << " s\n";
    return kOk;
  }
  const auto reports = coverage_sweep(cfg.scenario, cfg.T_grid);
  fs::create_directories(dir);
  std::vector<EstimatorSummary> all;
  double wall = 0.0;
  for (const ExperimentReport& r : reports) {
    const std::string tag = "T" + std::to_string(r.scenario.T);
    write_replications_csv(replication_rows(r), dir / ("replications_" + tag + ".csv"));
    write_summary_csv(r.summaries, dir / ("summary_" + tag + ".csv"));
    all.insert(all.end(), r.summaries.begin(), r.summaries.end());
    wall += r.wall_seconds;
    std::cerr << "sweep: T=" << r.scenario.T << " in " << r.wall_seconds << " s\n";
  }
  write_summary_csv(all, dir / "sweep.csv");
  write_metadata(cfg.scenario, cfg.T_grid, wall, dir / "metadata.json");
  return kOk;
}

std::size_t parse_oracle_reps(const std::string& text) {
  std::string v = text;
  if (v.rfind("R=", 0) == 0) v = v.substr(2);
  std::size_t used = 0;
  unsigned long long n = 0;
  try {
    n = std::stoull(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size() || n < 2) throw UsageError("--oracle expects R=<n> with n >= 2");
  return static_cast<std::size_t>(n);
}

int cmd_true_effect(const std::string& config, const std::optional<std::string>& oracle,
                    const std::optional<std::string>& seed) {
  const CliConfig cfg = load_with_seed(config, seed);
  std::optional<std::size_t> reps;
  if (oracle) reps = parse_oracle_reps(*oracle);
  const RngStream stream{cfg.scenario.base_seed, 2};
  TruthSpec analytic, mc;
  if (const auto* ade = std::get_if<AdeDgpConfig>(&cfg.scenario.dgp)) {
    analytic = true_ade(*ade, cfg.scenario.T);
    if (reps) mc = oracle_ade(*ade, cfg.scenario.T, *reps, stream);
  } else {
    const auto& sb = std::get<SwitchbackDgpConfig>(cfg.scenario.dgp);
    analytic = true_gate(sb);
    if (reps) mc = oracle_gate(sb, *reps, stream);
  }
  std::cout << "psi_star " << format_double(analytic.psi_star) << '\n';
  if (reps) {
    std::cout << "oracle " << format_double(mc.psi_star) << " se " << format_double(mc.oracle_se)
              << " R " << *reps << '\n';
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Double machine learning under shared-state interference"};
  app.require_subcommand(1);

  std::string config, out, out_dir, traj, aux;
  std::optional<std::string> seed, oracle;
  std::optional<std::size_t> jobs;

  auto* sim = app.add_subcommand("simulate", "Simulate a trajectory CSV from the configured model");
  sim->add_option("--config", config, "Config file or preset name")->required();
  sim->add_option("--out", out, "Output CSV")->required();
  sim->add_option("--seed", seed, "Seed override");

  auto* est = app.add_subcommand("estimate", "Estimate effects on a trajectory CSV");
  est->add_option("--config", config, "Config file or preset name")->required();
  est->add_option("--traj", traj, "Inference trajectory CSV")->required();
  est->add_option("--aux", aux, "Auxiliary trajectory CSV for nuisance fitting")->required();
  est->add_option("--out", out, "Output report CSV")->required();
  est->add_option("--seed", seed, "Seed override");

  auto* exp = app.add_subcommand("experiment", "Run a Monte Carlo experiment or coverage sweep");
  exp->add_option("--config", config, "Config file or preset name")->required();
  exp->add_option("--out-dir", out_dir, "Output directory")->required();
  exp->add_option("--jobs", jobs, "Concurrent replications");
  exp->add_option("--seed", seed, "Seed override");

  auto* truth = app.add_subcommand("true-effect", "Print the model's true effect");
  truth->add_option("--config", config, "Config file or preset name")->required();
  truth->add_option("--oracle", oracle, "Also run the Monte Carlo oracle, R=<n>");
  truth->add_option("--seed", seed, "Seed override");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*sim) return cmd_simulate(config, out, seed);
    if (*est) return cmd_estimate(config, traj, aux, out, seed);
    if (*exp) return cmd_experiment(config, out_dir, jobs, seed);
    if (*truth) return cmd_true_effect(config, oracle, seed);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const SchemaError& e) {
    std::cerr << "schema error: " << e.what() << '\n';
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kUsage;
}
