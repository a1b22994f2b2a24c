#pragma once

#include <cstddef>
#include <span>
#include <string>

#include "dml4ssi/core.hpp"
#include "dml4ssi/estimators.hpp"
#include "dml4ssi/nuisance.hpp"

namespace dml4ssi {

// theta > (1 + delta/2)^-1 with delta = 2.
inline constexpr double kDefaultBatchTheta = 2.0 / 3.0;

struct VarianceMethod {
  enum class Kind { kBatchMeans, kMDependent, kIidPlugin, kHtPlugin };

  Kind kind = Kind::kIidPlugin;
  double theta = kDefaultBatchTheta;  // batch-means exponent
  std::size_t m = 0;                  // m-dependent horizon

  static VarianceMethod BatchMeans(double theta = kDefaultBatchTheta) {
    return {Kind::kBatchMeans, theta, 0};
  }
  static VarianceMethod MDependent(std::size_t m) { return {Kind::kMDependent, kDefaultBatchTheta, m}; }
  static VarianceMethod IidPlugin() { return {Kind::kIidPlugin, kDefaultBatchTheta, 0}; }
  static VarianceMethod HtPlugin() { return {Kind::kHtPlugin, kDefaultBatchTheta, 0}; }

  void validate() const;
  std::string describe() const;
};

// Batch sizes used by var_batch_means: T2 = floor(T^theta), T1 = floor(T / T2).
struct BatchLayout {
  std::size_t batch_size = 0;
  std::size_t n_batches = 0;
};
BatchLayout batch_layout(std::size_t T, double theta);

// Long-run variance from non-overlapping batch sums compared against
// T2 times the full-sample mean; trailing T - T1*T2 terms only enter the mean.
double var_batch_means(std::span<const double> phis, double theta = kDefaultBatchTheta);
double var_batch_means(const PhiSeries& phis, double theta = kDefaultBatchTheta);

struct MDepVariance {
  double value = 0.0;
  bool degenerate = false;  // value < 0
};

// (1/T) sum_t [c_t^2 + 2 sum_{i=1..min(t-1,m)} c_t c_{t-i}], c_t = phi_t - mean.
MDepVariance var_mdep(std::span<const double> phis, std::size_t m);
MDepVariance var_mdep(const PhiSeries& phis, std::size_t m);

double var_iid_plugin(std::span<const double> phis);
double var_iid_plugin(const PhiSeries& phis);

// Difference-in-means HT variance with the cross-group centering
//   (1/T) sum_t [d/m(x) (y - Ybar0) - (1-d)/(1-m(x)) (y - Ybar1)]^2.
double var_ht(const Trajectory& traj, const PropensityModel& propensity);

struct ConfidenceInterval {
  double lo = 0.0;
  double hi = 0.0;
};

// psi -/+ z_{1-alpha/2} sqrt(sigma2 / T).
ConfidenceInterval confidence_interval(double psi_hat, double sigma2, std::size_t T, double alpha);

struct VarianceEstimate {
  double value = 0.0;
  bool degenerate = false;
};

// Dispatches on the method. kHtPlugin needs the trajectory and propensity.
VarianceEstimate estimate_variance(const VarianceMethod& method, const PhiSeries& phis,
                                   const Trajectory* traj = nullptr,
                                   const PropensityModel* propensity = nullptr);

// Assembles a report; a negative variance is clamped to 0 for the interval
// and flagged as degenerate.
EstimateReport make_report(const EstimatorResult& result, const VarianceEstimate& variance,
                           double alpha);

}  // namespace dml4ssi
