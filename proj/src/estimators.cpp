#include "dml4ssi/estimators.hpp"

#include <cmath>
#include <stdexcept>

#include "dml4ssi/dgp.hpp"

namespace dml4ssi {
namespace {

EstimatorResult finish(EstimatorKind kind, const Trajectory& traj, std::vector<double> values) {
  EstimatorResult out;
  out.psi_hat = compensated_mean(values);
  out.phis.values = std::move(values);
  out.phis.estimator = std::string(estimator_label(kind));
  out.phis.regime = traj.regime;
  if (traj.regime.kind == Regime::Kind::kMDependent) out.phis.m = traj.regime.m;
  return out;
}

void require_nonempty(const Trajectory& traj) {
  if (traj.obs.empty()) throw std::invalid_argument("estimator needs a trajectory with T >= 1");
}

double checked(double v, const char* what) {
  if (!std::isfinite(v)) throw std::domain_error(std::string("non-finite nuisance output: ") + what);
  return v;
}

double checked_propensity(const PropensityModel& m, std::span<const double> x) {
  const double p = m(x);
  if (!(p > 0.0 && p < 1.0)) throw std::domain_error("propensity outside (0, 1)");
  return p;
}

double ipw_weight(int d, double p) { return d == 1 ? 1.0 / p : -1.0 / (1.0 - p); }

struct Window {
  bool all_ones = false;
  bool all_zeros = false;
};

Window window_at(const Observation& o, std::size_t m) {
  if (o.h.size() < m) throw std::invalid_argument("shared state shorter than the treatment window");
  Window w{o.d == 1, o.d == 0};
  for (std::size_t i = 0; i < m; ++i) {
    w.all_ones = w.all_ones && o.h[i] == 1.0;
    w.all_zeros = w.all_zeros && o.h[i] == 0.0;
  }
  return w;
}

std::vector<double> with_treatment_block(const std::vector<double>& h, std::size_t m, double value) {
  std::vector<double> out = h;
  for (std::size_t i = 0; i < m; ++i) out[i] = value;
  return out;
}

void check_design(const Trajectory& traj, const SwitchbackDesign& design) {
  validate_design(design);
  if (traj.regime.kind == Regime::Kind::kMDependent && traj.regime.m != design.m) {
    throw std::invalid_argument("switchback design m does not match trajectory regime");
  }
}

// Pointwise AIPW score shared by dml4ssi (ADE), ssac and dml-naive.
double aipw_score(const Observation& o, const NuisanceSet& nuis) {
  const OutcomeModel& f = *nuis.f;
  const double f1 = checked(f(1, o.x, o.h), "f(1,.)");
  const double f0 = checked(f(0, o.x, o.h), "f(0,.)");
  const double p = checked_propensity(*nuis.m, o.x);
  const double fd = o.d == 1 ? f1 : f0;
  return (f1 - f0) + ipw_weight(o.d, p) * (o.y - fd);
}

std::vector<double> aipw_series(const Trajectory& traj, const NuisanceSet& nuis) {
  require_nonempty(traj);
  if (!nuis.f || !nuis.m) throw std::invalid_argument("nuisance set is incomplete");
  std::vector<double> values(traj.T());
  for (std::size_t i = 0; i < traj.T(); ++i) values[i] = aipw_score(traj.obs[i], nuis);
  return values;
}

}  // namespace

std::string_view estimator_label(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::kDml4ssi: return "dml4ssi";
    case EstimatorKind::kPlugin: return "plugin";
    case EstimatorKind::kHtNaive: return "ht-naive";
    case EstimatorKind::kDmlNaive: return "dml-naive";
    case EstimatorKind::kSsac: return "ssac";
    case EstimatorKind::kSbHt: return "sb-ht";
  }
  return "unknown";
}

std::optional<EstimatorKind> parse_estimator(std::string_view label) {
  for (EstimatorKind k : kAllEstimators) {
    if (estimator_label(k) == label) return k;
  }
  return std::nullopt;
}

double phi_ade(const Observation& obs, const NuisanceSet& nuis) { return aipw_score(obs, nuis); }

EstimatorResult psi_ade_dml(const Trajectory& traj, const NuisanceSet& nuis) {
  return finish(EstimatorKind::kDml4ssi, traj, aipw_series(traj, nuis));
}

EstimatorResult psi_ssac(const Trajectory& traj, const NuisanceSet& nuis) {
  return finish(EstimatorKind::kSsac, traj, aipw_series(traj, nuis));
}

EstimatorResult psi_dml_naive(const Trajectory& traj, const NuisanceSet& nuis_no_h) {
  if (nuis_no_h.includes_shared_state || (nuis_no_h.f && nuis_no_h.f->uses_shared_state())) {
    throw std::invalid_argument("dml-naive needs an outcome model without the shared state");
  }
  return finish(EstimatorKind::kDmlNaive, traj, aipw_series(traj, nuis_no_h));
}

EstimatorResult psi_plugin(const Trajectory& traj, const NuisanceSet& nuis) {
  require_nonempty(traj);
  std::vector<double> values(traj.T());
  for (std::size_t i = 0; i < traj.T(); ++i) {
    const Observation& o = traj.obs[i];
    values[i] = checked((*nuis.f)(1, o.x, o.h), "f(1,.)") - checked((*nuis.f)(0, o.x, o.h), "f(0,.)");
  }
  return finish(EstimatorKind::kPlugin, traj, std::move(values));
}

EstimatorResult psi_plugin_counterfactual(const Trajectory& traj, const NuisanceSet& nuis,
                                          const SwitchbackDesign& design) {
  require_nonempty(traj);
  check_design(traj, design);
  std::vector<double> values(traj.T());
  for (std::size_t i = 0; i < traj.T(); ++i) {
    const Observation& o = traj.obs[i];
    const auto h1 = with_treatment_block(o.h, design.m, 1.0);
    const auto h0 = with_treatment_block(o.h, design.m, 0.0);
    values[i] = checked((*nuis.f)(1, o.x, h1), "f(1,.)") - checked((*nuis.f)(0, o.x, h0), "f(0,.)");
  }
  return finish(EstimatorKind::kPlugin, traj, std::move(values));
}

EstimatorResult psi_ht_naive(const Trajectory& traj, const PropensityModel& propensity) {
  require_nonempty(traj);
  std::vector<double> values(traj.T());
  for (std::size_t i = 0; i < traj.T(); ++i) {
    const Observation& o = traj.obs[i];
    values[i] = ipw_weight(o.d, checked_propensity(propensity, o.x)) * o.y;
  }
  return finish(EstimatorKind::kHtNaive, traj, std::move(values));
}

double phi_gate(const Trajectory& traj, std::size_t t, const NuisanceSet& nuis,
                const SwitchbackDesign& design) {
  if (t == 0 || t > traj.T()) throw std::out_of_range("phi_gate: t outside 1..T");
  check_design(traj, design);
  const Observation& o = traj.obs[t - 1];
  const std::size_t m = design.m;
  const Window w = window_at(o, m);

  const auto h1 = with_treatment_block(o.h, m, 1.0);
  const auto h0 = with_treatment_block(o.h, m, 0.0);
  const double plug_in =
      checked((*nuis.f)(1, o.x, h1), "f(1,.)") - checked((*nuis.f)(0, o.x, h0), "f(0,.)");
  if (!w.all_ones && !w.all_zeros) return plug_in;

  const double pi = switchback_window_prob(
      design, t, w.all_ones ? WindowValue::kAllOnes : WindowValue::kAllZeros);
  if (!(pi > 0.0)) throw std::domain_error("zero window probability at t=" + std::to_string(t));
  const double residual = o.y - checked((*nuis.f)(o.d, o.x, o.h), "f(d,.)");
  return plug_in + (w.all_ones ? residual / pi : -residual / pi);
}

EstimatorResult psi_gate_dml(const Trajectory& traj, const NuisanceSet& nuis,
                             const SwitchbackDesign& design) {
  require_nonempty(traj);
  std::vector<double> values(traj.T());
  for (std::size_t t = 1; t <= traj.T(); ++t) values[t - 1] = phi_gate(traj, t, nuis, design);
  return finish(EstimatorKind::kDml4ssi, traj, std::move(values));
}

EstimatorResult psi_sb_ht(const Trajectory& traj, const SwitchbackDesign& design) {
  require_nonempty(traj);
  check_design(traj, design);
  std::vector<double> values(traj.T());
  for (std::size_t t = 1; t <= traj.T(); ++t) {
    const Observation& o = traj.obs[t - 1];
    const Window w = window_at(o, design.m);
    double v = 0.0;
    if (w.all_ones) {
      v = o.y / switchback_window_prob(design, t, WindowValue::kAllOnes);
    } else if (w.all_zeros) {
      v = -o.y / switchback_window_prob(design, t, WindowValue::kAllZeros);
    }
    values[t - 1] = v;
  }
  return finish(EstimatorKind::kSbHt, traj, std::move(values));
}

}  // namespace dml4ssi
