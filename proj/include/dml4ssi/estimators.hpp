#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dml4ssi/core.hpp"
#include "dml4ssi/nuisance.hpp"

namespace dml4ssi {

enum class EstimatorKind { kDml4ssi, kPlugin, kHtNaive, kDmlNaive, kSsac, kSbHt };

// Canonical order, used for report rows.
inline constexpr std::array<EstimatorKind, 6> kAllEstimators = {
    EstimatorKind::kDml4ssi, EstimatorKind::kPlugin, EstimatorKind::kHtNaive,
    EstimatorKind::kDmlNaive, EstimatorKind::kSsac, EstimatorKind::kSbHt};

std::string_view estimator_label(EstimatorKind kind);
std::optional<EstimatorKind> parse_estimator(std::string_view label);

// Per-step scores phi(W_t; eta); every estimate is their mean.
struct PhiSeries {
  std::vector<double> values;
  std::string estimator;
  Regime regime;
  std::optional<std::size_t> m;
};

struct EstimatorResult {
  double psi_hat = 0.0;
  PhiSeries phis;
};

// AIPW score with the shared state as an outcome-model argument:
//   f(1,x,h) - f(0,x,h) + (d/m(x) - (1-d)/(1-m(x))) (y - f(d,x,h)).
double phi_ade(const Observation& obs, const NuisanceSet& nuis);

EstimatorResult psi_ade_dml(const Trajectory& traj, const NuisanceSet& nuis);

// Plug-in mean of f(1,x_t,h_t) - f(0,x_t,h_t) at the observed state.
EstimatorResult psi_plugin(const Trajectory& traj, const NuisanceSet& nuis);

// Plug-in mean of f(1,x_t,h_t(1)) - f(0,x_t,h_t(0)) with the treatment block
// of the state replaced by all-ones / all-zeros.
EstimatorResult psi_plugin_counterfactual(const Trajectory& traj, const NuisanceSet& nuis,
                                          const SwitchbackDesign& design);

// Difference-in-means Horvitz-Thompson: mean of (d/m - (1-d)/(1-m)) y.
EstimatorResult psi_ht_naive(const Trajectory& traj, const PropensityModel& propensity);

// iid AIPW with an outcome model that ignores the shared state.
EstimatorResult psi_dml_naive(const Trajectory& traj, const NuisanceSet& nuis_no_h);

// Shared state treated as iid covariates. Same score as phi_ade.
EstimatorResult psi_ssac(const Trajectory& traj, const NuisanceSet& nuis);

// Switchback GATE score at 1-based time t. The first m entries of h_t hold
// D_{t-m}, ..., D_{t-1}; the window probabilities are exact design values.
double phi_gate(const Trajectory& traj, std::size_t t, const NuisanceSet& nuis,
                const SwitchbackDesign& design);

EstimatorResult psi_gate_dml(const Trajectory& traj, const NuisanceSet& nuis,
                             const SwitchbackDesign& design);

// Switchback Horvitz-Thompson on the full window indicator.
EstimatorResult psi_sb_ht(const Trajectory& traj, const SwitchbackDesign& design);

}  // namespace dml4ssi
