#include "dml4ssi/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "dml4ssi/nuisance.hpp"

namespace dml4ssi {
namespace {

bool needs_outcome_with_h(EstimatorKind k) {
  return k == EstimatorKind::kDml4ssi || k == EstimatorKind::kPlugin || k == EstimatorKind::kSsac;
}
bool needs_outcome_without_h(EstimatorKind k) { return k == EstimatorKind::kDmlNaive; }
bool needs_propensity(EstimatorKind k) {
  return k == EstimatorKind::kDml4ssi || k == EstimatorKind::kHtNaive ||
         k == EstimatorKind::kDmlNaive || k == EstimatorKind::kSsac;
}

std::size_t truth_horizon(const Scenario& s) { return s.T; }

double psi_star_of(const Scenario& s) {
  if (const auto* ade = std::get_if<AdeDgpConfig>(&s.dgp)) return true_ade(*ade, truth_horizon(s)).psi_star;
  return true_gate(std::get<SwitchbackDgpConfig>(s.dgp)).psi_star;
}

Trajectory simulate(const DgpConfig& cfg, std::size_t T, const RngStream& stream) {
  if (const auto* ade = std::get_if<AdeDgpConfig>(&cfg)) return simulate_ade_dgp(*ade, T, stream);
  return simulate_switchback_dgp(std::get<SwitchbackDgpConfig>(cfg), T, stream);
}

double zeta_of(const DgpConfig& cfg) {
  if (const auto* ade = std::get_if<AdeDgpConfig>(&cfg)) return ade->zeta;
  const double p = std::get<SwitchbackDgpConfig>(cfg).design.treat_prob;
  return std::min(p, 1.0 - p) / 2.0;
}

// A fitted (or oracle) model, or the reason it is unavailable.
template <class T>
struct Slot {
  std::shared_ptr<const T> model;
  std::string error;
  bool attempted = false;
};

// Lazily built nuisances of one replication. Each model has a fixed
// sub-stream, so the set of requested estimators does not affect any fit.
class NuisanceCache {
 public:
  using AuxSource = std::function<const Trajectory&()>;
  NuisanceCache(const Scenario& s, AuxSource aux, const RngStream& fit_stream)
      : s_(s), aux_(std::move(aux)), fit_stream_(fit_stream) {}

  std::shared_ptr<const OutcomeModel> outcome(bool with_h) {
    Slot<OutcomeModel>& slot = with_h ? f_ : f_no_h_;
    if (!slot.attempted) {
      slot.attempted = true;
      try {
        if (s_.oracle_nuisances) {
          slot.model = oracle_nuisances(s_.dgp, with_h, s_.T).f;
        } else {
          ForestParams p = s_.forest;
          p.seed = derive_stream(fit_stream_, with_h ? 0 : 1);
          slot.model = fit_outcome_model(aux_(), with_h, p);
        }
      } catch (const std::exception& e) {
        slot.error = e.what();
      }
    }
    if (!slot.model) throw std::runtime_error(slot.error);
    return slot.model;
  }

  std::shared_ptr<const PropensityModel> propensity() {
    if (!m_.attempted) {
      m_.attempted = true;
      try {
        if (const auto* sb = std::get_if<SwitchbackDgpConfig>(&s_.dgp)) {
          // The design probability is known.
          m_.model = constant_propensity(sb->design.treat_prob);
        } else if (s_.oracle_nuisances) {
          m_.model = oracle_nuisances(s_.dgp, true, s_.T).m;
        } else {
          ForestParams p = s_.forest;
          p.seed = derive_stream(fit_stream_, 2);
          m_.model = fit_propensity_model(aux_(), zeta_of(s_.dgp), p);
        }
      } catch (const std::exception& e) {
        m_.error = e.what();
      }
    }
    if (!m_.model) throw std::runtime_error(m_.error);
    return m_.model;
  }

  NuisanceSet set(EstimatorKind k, bool with_h) {
    NuisanceSet n;
    if (needs_outcome_with_h(k) || needs_outcome_without_h(k)) n.f = outcome(with_h);
    if (needs_propensity(k)) n.m = propensity();
    n.zeta = zeta_of(s_.dgp);
    n.includes_shared_state = with_h;
    return n;
  }

 private:
  const Scenario& s_;
  AuxSource aux_;
  RngStream fit_stream_;
  Slot<OutcomeModel> f_;
  Slot<OutcomeModel> f_no_h_;
  Slot<PropensityModel> m_;
};

EstimatorOutcome estimate_one(const Scenario& s, EstimatorKind kind, const Trajectory& traj,
                              NuisanceCache& cache, double psi_star) {
  const auto* sb = std::get_if<SwitchbackDgpConfig>(&s.dgp);
  EstimatorResult result;
  std::shared_ptr<const PropensityModel> prop;
  switch (kind) {
    case EstimatorKind::kDml4ssi:
      if (sb) {
        result = psi_gate_dml(traj, cache.set(kind, true), sb->design);
      } else {
        result = psi_ade_dml(traj, cache.set(kind, true));
      }
      break;
    case EstimatorKind::kPlugin: result = psi_plugin(traj, cache.set(kind, true)); break;
    case EstimatorKind::kHtNaive:
      prop = cache.propensity();
      result = psi_ht_naive(traj, *prop);
      break;
    case EstimatorKind::kDmlNaive: result = psi_dml_naive(traj, cache.set(kind, false)); break;
    case EstimatorKind::kSsac: result = psi_ssac(traj, cache.set(kind, true)); break;
    case EstimatorKind::kSbHt:
      if (!sb) throw std::invalid_argument("sb-ht needs a switchback model");
      result = psi_sb_ht(traj, sb->design);
      break;
  }
  const VarianceMethod method = s.variance_for(kind);
  if (method.kind == VarianceMethod::Kind::kHtPlugin && !prop) prop = cache.propensity();
  const VarianceEstimate var = estimate_variance(method, result.phis, &traj, prop.get());
  EstimatorOutcome out;
  out.report = make_report(result, var, s.alpha);
  out.covered = out.report.ci_low <= psi_star && psi_star <= out.report.ci_high;
  return out;
}

std::vector<EstimatorKind> canonical_order(const std::vector<EstimatorKind>& kinds) {
  std::vector<EstimatorKind> out;
  for (EstimatorKind k : kAllEstimators) {
    if (std::find(kinds.begin(), kinds.end(), k) != kinds.end()) out.push_back(k);
  }
  return out;
}

std::vector<std::string> labels_of(const std::vector<EstimatorKind>& kinds) {
  std::vector<std::string> out;
  for (EstimatorKind k : canonical_order(kinds)) out.emplace_back(estimator_label(k));
  return out;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  return out;
}

void check_written(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_num(const std::string& s, const std::filesystem::path& path, std::size_t line) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error(path.string() + ":" + std::to_string(line) + ": bad number '" + s + "'");
  }
}

constexpr const char* kReplicationHeader =
    "replication,estimator,psi_hat,sigma2_hat,ci_low,ci_high,covered,psi_star,degenerate";
constexpr const char* kSummaryHeader =
    "estimator,T,R,mean_bias,bias_sd,mc_se,coverage,coverage_se,mean_ci_width";

}  // namespace

bool is_switchback(const DgpConfig& cfg) { return std::holds_alternative<SwitchbackDgpConfig>(cfg); }

VarianceMethod default_variance(EstimatorKind kind, const DgpConfig& cfg) {
  switch (kind) {
    case EstimatorKind::kDml4ssi:
    case EstimatorKind::kPlugin:
    case EstimatorKind::kSbHt:
      if (const auto* sb = std::get_if<SwitchbackDgpConfig>(&cfg)) {
        return VarianceMethod::MDependent(sb->design.m);
      }
      return VarianceMethod::BatchMeans();
    case EstimatorKind::kSsac:
    case EstimatorKind::kDmlNaive: return VarianceMethod::IidPlugin();
    case EstimatorKind::kHtNaive: return VarianceMethod::HtPlugin();
  }
  return VarianceMethod::IidPlugin();
}

void Scenario::validate() const {
  std::visit([](const auto& c) { c.validate(); }, dgp);
  if (T == 0) throw std::invalid_argument("T must be positive");
  if (aux_T == 0) throw std::invalid_argument("aux_T must be positive");
  if (R == 0) throw std::invalid_argument("R must be positive");
  if (jobs == 0) throw std::invalid_argument("jobs must be positive");
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
  forest.validate();
  for (EstimatorKind k : estimators) {
    if (k == EstimatorKind::kSbHt && !is_switchback(dgp)) {
      throw std::invalid_argument("sb-ht is only defined for the switchback model");
    }
  }
  for (const auto& [k, method] : variance) {
    method.validate();
    if (method.kind == VarianceMethod::Kind::kMDependent && !is_switchback(dgp)) {
      // m-dependence is not a property of the ADE chain.
      throw std::invalid_argument(std::string("m-dependent variance for ") +
                                  std::string(estimator_label(k)) + " needs the switchback model");
    }
  }
}

VarianceMethod Scenario::variance_for(EstimatorKind kind) const {
  const auto it = variance.find(kind);
  return it != variance.end() ? it->second : default_variance(kind, dgp);
}

RngStream replication_stream(const Scenario& scenario, std::size_t index, Stage stage) {
  const RngStream root{scenario.base_seed, scenario.root_stream};
  return derive_stream(root, static_cast<std::uint64_t>(index) * 8 + static_cast<std::uint64_t>(stage));
}

ReplicationResult run_replication(const Scenario& scenario, std::size_t index) {
  ReplicationResult out;
  out.index = index;
  out.psi_star = psi_star_of(scenario);
  const std::vector<EstimatorKind> kinds = canonical_order(scenario.estimators);
  if (kinds.empty()) return out;

  std::optional<Trajectory> traj;
  std::string sim_error;
  try {
    traj = simulate(scenario.dgp, scenario.T, replication_stream(scenario, index, Stage::kInferenceSim));
  } catch (const std::exception& e) {
    sim_error = e.what();
  }
  std::optional<Trajectory> aux;
  NuisanceCache cache(
      scenario,
      [&]() -> const Trajectory& {
        if (!aux) aux = simulate(scenario.dgp, scenario.aux_T, replication_stream(scenario, index, Stage::kAuxSim));
        return *aux;
      },
      replication_stream(scenario, index, Stage::kForestFit));
  for (EstimatorKind k : kinds) {
    if (!traj) {
      out.failures[k] = "simulation failed: " + sim_error;
      continue;
    }
    try {
      out.outcomes[k] = estimate_one(scenario, k, *traj, cache, out.psi_star);
    } catch (const std::exception& e) {
      out.failures[k] = e.what();
    }
  }
  return out;
}

EstimationRun estimate_trajectory(const Scenario& scenario, const Trajectory& traj,
                                  const Trajectory& aux, const RngStream& fit_stream) {
  EstimationRun out;
  out.psi_star = psi_star_of(scenario);
  NuisanceCache cache(scenario, [&]() -> const Trajectory& { return aux; }, fit_stream);
  for (EstimatorKind k : canonical_order(scenario.estimators)) {
    try {
      out.outcomes[k] = estimate_one(scenario, k, traj, cache, out.psi_star);
    } catch (const std::exception& e) {
      out.failures[k] = e.what();
    }
  }
  return out;
}

ExperimentReport run_experiment(const Scenario& scenario) {
  scenario.validate();
  const auto start = std::chrono::steady_clock::now();
  ExperimentReport report;
  report.scenario = scenario;
  report.replications.resize(scenario.R);

  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr fatal;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= scenario.R) return;
      try {
        report.replications[i] = run_replication(scenario, i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!fatal) fatal = std::current_exception();
        return;
      }
    }
  };
  const std::size_t n_threads = std::min(scenario.jobs, scenario.R);
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (std::size_t j = 0; j < n_threads; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (fatal) std::rethrow_exception(fatal);

  if (!scenario.estimators.empty()) {
    const bool any_ok = std::any_of(report.replications.begin(), report.replications.end(),
                                    [](const ReplicationResult& r) { return !r.outcomes.empty(); });
    if (!any_ok) {
      std::string why = "every replication failed";
      const auto& first = report.replications.front().failures;
      if (!first.empty()) {
        why += " (replication 0, " + std::string(estimator_label(first.begin()->first)) + ": " +
               first.begin()->second + ")";
      }
      throw std::runtime_error(why);
    }
  }
  report.summaries = summarize(replication_rows(report), scenario.T, labels_of(scenario.estimators));
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

std::vector<ExperimentReport> coverage_sweep(const Scenario& scenario,
                                             std::span<const std::size_t> T_grid) {
  if (T_grid.empty()) throw std::invalid_argument("coverage sweep needs a nonempty grid");
  for (std::size_t g = 1; g < T_grid.size(); ++g) {
    if (T_grid[g] <= T_grid[g - 1]) throw std::invalid_argument("T grid must be increasing");
  }
  std::vector<ExperimentReport> out;
  out.reserve(T_grid.size());
  for (std::size_t g = 0; g < T_grid.size(); ++g) {
    Scenario s = scenario;
    s.T = T_grid[g];
    s.aux_T = T_grid[g];
    s.root_stream = scenario.root_stream + g + 1;
    out.push_back(run_experiment(s));
  }
  return out;
}

std::vector<ReplicationRow> replication_rows(const ExperimentReport& report) {
  std::vector<ReplicationRow> rows;
  for (const ReplicationResult& r : report.replications) {
    for (const auto& [kind, o] : r.outcomes) {  // map order is canonical order
      ReplicationRow row;
      row.replication = r.index;
      row.estimator = std::string(estimator_label(kind));
      row.psi_hat = o.report.psi_hat;
      row.sigma2_hat = o.report.sigma2_hat;
      row.ci_low = o.report.ci_low;
      row.ci_high = o.report.ci_high;
      row.covered = o.covered;
      row.psi_star = r.psi_star;
      row.degenerate = o.report.degenerate;
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::vector<EstimatorSummary> summarize(const std::vector<ReplicationRow>& rows, std::size_t T,
                                        const std::vector<std::string>& labels) {
  std::vector<EstimatorSummary> out;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const std::string& label : labels) {
    std::vector<double> bias, covered, width;
    for (const ReplicationRow& row : rows) {
      if (row.estimator != label) continue;
      bias.push_back(row.psi_hat - row.psi_star);
      covered.push_back(row.covered ? 1.0 : 0.0);
      width.push_back(row.ci_high - row.ci_low);
    }
    EstimatorSummary s;
    s.estimator = label;
    s.T = T;
    s.R = bias.size();
    if (s.R == 0) {
      s.mean_bias = s.bias_sd = s.mc_se = s.coverage = s.coverage_se = s.mean_ci_width = nan;
      out.push_back(s);
      continue;
    }
    const double n = static_cast<double>(s.R);
    s.mean_bias = compensated_mean(bias);
    if (s.R > 1) {
      CompensatedSum ss;
      for (double b : bias) ss.add((b - s.mean_bias) * (b - s.mean_bias));
      s.bias_sd = std::sqrt(ss.value() / (n - 1.0));
    }
    s.mc_se = s.bias_sd / std::sqrt(n);
    s.coverage = compensated_mean(covered);
    s.coverage_se = std::sqrt(s.coverage * (1.0 - s.coverage) / n);
    s.mean_ci_width = compensated_mean(width);
    out.push_back(s);
  }
  return out;
}

void write_replications_csv(const std::vector<ReplicationRow>& rows, const std::filesystem::path& path) {
  std::ofstream out = open_out(path);
  out << kReplicationHeader << '\n';
  for (const ReplicationRow& r : rows) {
    out << r.replication << ',' << r.estimator << ',' << format_double(r.psi_hat) << ','
        << format_double(r.sigma2_hat) << ',' << format_double(r.ci_low) << ','
        << format_double(r.ci_high) << ',' << (r.covered ? 1 : 0) << ',' << format_double(r.psi_star)
        << ',' << (r.degenerate ? 1 : 0) << '\n';
  }
  check_written(out, path);
}

void write_summary_csv(const std::vector<EstimatorSummary>& rows, const std::filesystem::path& path) {
  std::ofstream out = open_out(path);
  out << kSummaryHeader << '\n';
  for (const EstimatorSummary& s : rows) {
    out << s.estimator << ',' << s.T << ',' << s.R << ',' << format_double(s.mean_bias) << ','
        << format_double(s.bias_sd) << ',' << format_double(s.mc_se) << ','
        << format_double(s.coverage) << ',' << format_double(s.coverage_se) << ','
        << format_double(s.mean_ci_width) << '\n';
  }
  check_written(out, path);
}

std::vector<ReplicationRow> read_replications_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kReplicationHeader) {
    throw std::runtime_error(path.string() + ": unexpected header");
  }
  std::vector<ReplicationRow> rows;
  std::size_t n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    const auto c = split_csv_line(line);
    if (c.size() != 9) throw std::runtime_error(path.string() + ":" + std::to_string(n) + ": expected 9 cells");
    ReplicationRow r;
    r.replication = static_cast<std::size_t>(parse_num(c[0], path, n));
    r.estimator = c[1];
    r.psi_hat = parse_num(c[2], path, n);
    r.sigma2_hat = parse_num(c[3], path, n);
    r.ci_low = parse_num(c[4], path, n);
    r.ci_high = parse_num(c[5], path, n);
    r.covered = c[6] == "1";
    r.psi_star = parse_num(c[7], path, n);
    r.degenerate = c[8] == "1";
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<EstimatorSummary> read_summary_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kSummaryHeader) {
    throw std::runtime_error(path.string() + ": unexpected header");
  }
  std::vector<EstimatorSummary> rows;
  std::size_t n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    const auto c = split_csv_line(line);
    if (c.size() != 9) throw std::runtime_error(path.string() + ":" + std::to_string(n) + ": expected 9 cells");
    EstimatorSummary s;
    s.estimator = c[0];
    s.T = static_cast<std::size_t>(parse_num(c[1], path, n));
    s.R = static_cast<std::size_t>(parse_num(c[2], path, n));
    s.mean_bias = parse_num(c[3], path, n);
    s.bias_sd = parse_num(c[4], path, n);
    s.mc_se = parse_num(c[5], path, n);
    s.coverage = parse_num(c[6], path, n);
    s.coverage_se = parse_num(c[7], path, n);
    s.mean_ci_width = parse_num(c[8], path, n);
    rows.push_back(std::move(s));
  }
  return rows;
}

void emit_csv(const ExperimentReport& report, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());
  write_replications_csv(replication_rows(report), dir / "replications.csv");
  write_summary_csv(report.summaries, dir / "summary.csv");
}

namespace {

// eta* + r * delta for the outcome regression.
class ShiftedOutcome final : public OutcomeModel {
 public:
  ShiftedOutcome(std::shared_ptr<const OutcomeModel> base, double r, double shift0, double shift1)
      : base_(std::move(base)), r_(r), shift0_(shift0), shift1_(shift1) {}
  double operator()(int d, std::span<const double> x, std::span<const double> h) const override {
    return (*base_)(d, x, h) + r_ * (d == 1 ? shift1_ : shift0_);
  }
  bool uses_shared_state() const override { return base_->uses_shared_state(); }

 private:
  std::shared_ptr<const OutcomeModel> base_;
  double r_, shift0_, shift1_;
};

// m* (1 - r/2): moves toward m*/2 while staying inside (0, 1).
class ShrunkPropensity final : public PropensityModel {
 public:
  ShrunkPropensity(std::shared_ptr<const PropensityModel> base, double r) : base_(std::move(base)), r_(r) {}
  double operator()(std::span<const double> x) const override { return (*base_)(x) * (1.0 - r_ / 2.0); }

 private:
  std::shared_ptr<const PropensityModel> base_;
  double r_;
};

double probe_estimate(EstimatorKind kind, const DgpConfig& cfg, const Trajectory& traj,
                      const NuisanceSet& nuis) {
  const auto* sb = std::get_if<SwitchbackDgpConfig>(&cfg);
  if (kind == EstimatorKind::kDml4ssi) {
    return sb ? psi_gate_dml(traj, nuis, sb->design).psi_hat : psi_ade_dml(traj, nuis).psi_hat;
  }
  return sb ? psi_plugin_counterfactual(traj, nuis, sb->design).psi_hat : psi_plugin(traj, nuis).psi_hat;
}

NuisanceSet perturbed(const DgpConfig& cfg, const NuisanceSet& star, double r) {
  NuisanceSet out = star;
  if (is_switchback(cfg)) {
    // Delta f = 1 + d; the design propensity is known and left exact.
    out.f = std::make_shared<ShiftedOutcome>(star.f, r, 1.0, 2.0);
  } else {
    // Delta f = d, Delta m = -m*/2.
    out.f = std::make_shared<ShiftedOutcome>(star.f, r, 0.0, 1.0);
    out.m = std::make_shared<ShrunkPropensity>(star.m, r);
  }
  return out;
}

}  // namespace

OrthogonalityResult neyman_orthogonality_check(EstimatorKind estimator, const DgpConfig& cfg,
                                               std::size_t T, std::size_t R,
                                               std::span<const double> eps_grid,
                                               const RngStream& stream) {
  if (estimator != EstimatorKind::kDml4ssi && estimator != EstimatorKind::kPlugin) {
    throw std::invalid_argument("orthogonality probe supports dml4ssi and plugin");
  }
  if (eps_grid.empty() || R < 2) throw std::invalid_argument("orthogonality probe needs eps values and R >= 2");
  const NuisanceSet star = oracle_nuisances(cfg, true, T);
  std::vector<std::vector<double>> diffs(eps_grid.size(), std::vector<double>(R));
  for (std::size_t i = 0; i < R; ++i) {
    const Trajectory traj = simulate(cfg, T, derive_stream(stream, i));
    const double base = probe_estimate(estimator, cfg, traj, star);
    for (std::size_t e = 0; e < eps_grid.size(); ++e) {
      diffs[e][i] = probe_estimate(estimator, cfg, traj, perturbed(cfg, star, eps_grid[e])) - base;
    }
  }
  OrthogonalityResult out;
  for (std::size_t e = 0; e < eps_grid.size(); ++e) {
    OrthogonalityPoint p;
    p.eps = eps_grid[e];
    p.g = compensated_mean(diffs[e]);
    CompensatedSum ss;
    for (double v : diffs[e]) ss.add((v - p.g) * (v - p.g));
    p.se = std::sqrt(ss.value() / static_cast<double>(R - 1) / static_cast<double>(R));
    out.points.push_back(p);
  }
  const OrthogonalityPoint& top = out.points.front();
  out.kappa = std::abs(top.g) / (top.eps * top.eps);
  out.passes = std::all_of(out.points.begin(), out.points.end(), [&](const OrthogonalityPoint& p) {
    return std::abs(p.g) <= out.kappa * p.eps * p.eps + 3.0 * p.se;
  });
  return out;
}

}  // namespace dml4ssi
