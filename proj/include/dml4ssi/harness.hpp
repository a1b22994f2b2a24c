#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "dml4ssi/dgp.hpp"
#include "dml4ssi/estimators.hpp"
#include "dml4ssi/forest.hpp"
#include "dml4ssi/variance.hpp"

namespace dml4ssi {

struct Scenario {
  DgpConfig dgp = AdeDgpConfig{};
  std::size_t T = 1000;
  std::size_t aux_T = 1000;
  std::vector<EstimatorKind> estimators;
  // Estimators without an entry use default_variance().
  std::map<EstimatorKind, VarianceMethod> variance;
  double alpha = 0.05;
  std::size_t R = 300;
  std::uint64_t base_seed = 1;
  std::uint64_t root_stream = 0;
  std::size_t jobs = 1;
  // Substitute the closed-form f*, m* for fitted nuisances.
  bool oracle_nuisances = false;
  ForestParams forest;  // seed is ignored; each fit gets a derived stream

  // Throws std::invalid_argument. Also rejects estimator/model pairings that
  // cannot be computed (sb-ht outside switchback models).
  void validate() const;
  VarianceMethod variance_for(EstimatorKind kind) const;
};

bool is_switchback(const DgpConfig& cfg);
VarianceMethod default_variance(EstimatorKind kind, const DgpConfig& cfg);

// Stages of the per-replication stream layout (index * 8 + stage).
enum class Stage : std::uint64_t { kAuxSim = 0, kForestFit = 1, kInferenceSim = 2, kPerturbation = 3 };
RngStream replication_stream(const Scenario& scenario, std::size_t index, Stage stage);

struct EstimatorOutcome {
  EstimateReport report;
  bool covered = false;
};

struct ReplicationResult {
  std::size_t index = 0;
  double psi_star = 0.0;
  std::map<EstimatorKind, EstimatorOutcome> outcomes;
  std::map<EstimatorKind, std::string> failures;
};

ReplicationResult run_replication(const Scenario& scenario, std::size_t index);

// Nuisances fitted on aux (forest seeds derived from fit_stream), every
// configured estimator evaluated on traj. Coverage is against the model's
// analytic estimand.
struct EstimationRun {
  double psi_star = 0.0;
  std::map<EstimatorKind, EstimatorOutcome> outcomes;
  std::map<EstimatorKind, std::string> failures;
};
EstimationRun estimate_trajectory(const Scenario& scenario, const Trajectory& traj,
                                  const Trajectory& aux, const RngStream& fit_stream);

// One row of replications.csv.
struct ReplicationRow {
  std::size_t replication = 0;
  std::string estimator;
  double psi_hat = 0.0;
  double sigma2_hat = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  bool covered = false;
  double psi_star = 0.0;
  bool degenerate = false;
};

// One row of summary.csv.
struct EstimatorSummary {
  std::string estimator;
  std::size_t T = 0;
  std::size_t R = 0;
  double mean_bias = 0.0;
  double bias_sd = 0.0;
  double mc_se = 0.0;
  double coverage = 0.0;
  double coverage_se = 0.0;
  double mean_ci_width = 0.0;
};

struct ExperimentReport {
  Scenario scenario;
  std::vector<ReplicationResult> replications;
  std::vector<EstimatorSummary> summaries;
  double wall_seconds = 0.0;
};

// Replications run on up to scenario.jobs threads and are merged in index
// order, so the report does not depend on the schedule.
ExperimentReport run_experiment(const Scenario& scenario);

// One experiment per horizon; grid point g uses root stream g + 1 and an
// auxiliary sample of the same size as the horizon.
std::vector<ExperimentReport> coverage_sweep(const Scenario& scenario,
                                             std::span<const std::size_t> T_grid);

std::vector<ReplicationRow> replication_rows(const ExperimentReport& report);
// Aggregates rows per estimator, in the given label order.
std::vector<EstimatorSummary> summarize(const std::vector<ReplicationRow>& rows, std::size_t T,
                                        const std::vector<std::string>& labels);

void write_replications_csv(const std::vector<ReplicationRow>& rows, const std::filesystem::path& path);
void write_summary_csv(const std::vector<EstimatorSummary>& rows, const std::filesystem::path& path);
std::vector<ReplicationRow> read_replications_csv(const std::filesystem::path& path);
std::vector<EstimatorSummary> read_summary_csv(const std::filesystem::path& path);

// Writes <dir>/replications.csv and <dir>/summary.csv.
void emit_csv(const ExperimentReport& report, const std::filesystem::path& dir);

// Finite-difference check of first-order insensitivity to nuisance error.
// Along eta_r = eta* + r (eta~ - eta*), g(r) = E[psi(W; eta_r)] - E[psi(W; eta*)]
// is estimated with common random numbers over R oracle-model trajectories.
// kappa = |g(eps_0)| / eps_0^2 at the first (largest) eps; the check passes when
// |g(eps)| <= kappa eps^2 + 3 se(eps) at every eps.
struct OrthogonalityPoint {
  double eps = 0.0;
  double g = 0.0;
  double se = 0.0;
};

struct OrthogonalityResult {
  std::vector<OrthogonalityPoint> points;
  double kappa = 0.0;
  bool passes = false;
};

// Supported estimators: kDml4ssi (ADE or GATE score, by model) and kPlugin.
OrthogonalityResult neyman_orthogonality_check(EstimatorKind estimator, const DgpConfig& cfg,
                                               std::size_t T, std::size_t R,
                                               std::span<const double> eps_grid,
                                               const RngStream& stream);

}  // namespace dml4ssi
