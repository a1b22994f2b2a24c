#include "dml4ssi/variance.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace dml4ssi {

void VarianceMethod::validate() const {
  if (kind == Kind::kBatchMeans && !(theta > 0.0 && theta < 1.0)) {
    throw std::invalid_argument("batch-means theta must lie in (0, 1)");
  }
}

std::string VarianceMethod::describe() const {
  switch (kind) {
    case Kind::kBatchMeans: return "batch-means(theta=" + format_double(theta) + ")";
    case Kind::kMDependent: return "m-dependent(m=" + std::to_string(m) + ")";
    case Kind::kIidPlugin: return "iid-plugin";
    case Kind::kHtPlugin: return "ht-plugin";
  }
  return "unknown";
}

BatchLayout batch_layout(std::size_t T, double theta) {
  if (!(theta > 0.0 && theta < 1.0)) throw std::invalid_argument("batch-means theta must lie in (0, 1)");
  // The relative nudge keeps exact powers (1000^(2/3) = 100) from rounding down.
  const double raw = std::pow(static_cast<double>(T), theta) * (1.0 + 1e-12);
  BatchLayout layout;
  layout.batch_size = static_cast<std::size_t>(std::floor(raw));
  if (layout.batch_size == 0) throw std::invalid_argument("batch means: T too small");
  layout.n_batches = T / layout.batch_size;
  return layout;
}

double var_batch_means(std::span<const double> phis, double theta) {
  const std::size_t T = phis.size();
  const BatchLayout layout = batch_layout(T, theta);
  if (layout.n_batches < 2) {
    throw std::invalid_argument("batch means needs at least two batches (T=" + std::to_string(T) + ")");
  }
  const double mean = compensated_mean(phis);
  const double target = static_cast<double>(layout.batch_size) * mean;
  CompensatedSum total;
  for (std::size_t b = 0; b < layout.n_batches; ++b) {
    const double block = compensated_sum(phis.subspan(b * layout.batch_size, layout.batch_size));
    const double dev = block - target;
    total.add(dev * dev);
  }
  return total.value() /
         (static_cast<double>(layout.batch_size) * static_cast<double>(layout.n_batches - 1));
}

double var_batch_means(const PhiSeries& phis, double theta) {
  return var_batch_means(std::span<const double>(phis.values), theta);
}

MDepVariance var_mdep(std::span<const double> phis, std::size_t m) {
  const std::size_t T = phis.size();
  if (T < m + 1) throw std::invalid_argument("m-dependent variance needs T >= m + 1");
  const double mean = compensated_mean(phis);
  std::vector<double> c(T);
  for (std::size_t t = 0; t < T; ++t) c[t] = phis[t] - mean;
  CompensatedSum acc;
  for (std::size_t t = 0; t < T; ++t) {
    double term = c[t] * c[t];
    const std::size_t lags = std::min(t, m);
    for (std::size_t i = 1; i <= lags; ++i) term += 2.0 * c[t] * c[t - i];
    acc.add(term);
  }
  MDepVariance out;
  out.value = acc.value() / static_cast<double>(T);
  out.degenerate = out.value < 0.0;
  return out;
}

MDepVariance var_mdep(const PhiSeries& phis, std::size_t m) {
  return var_mdep(std::span<const double>(phis.values), m);
}

double var_iid_plugin(std::span<const double> phis) {
  const double mean = compensated_mean(phis);
  CompensatedSum acc;
  for (double v : phis) acc.add((v - mean) * (v - mean));
  return acc.value() / static_cast<double>(phis.size());
}

double var_iid_plugin(const PhiSeries& phis) {
  return var_iid_plugin(std::span<const double>(phis.values));
}

double var_ht(const Trajectory& traj, const PropensityModel& propensity) {
  CompensatedSum sum1, sum0;
  std::size_t n1 = 0, n0 = 0;
  for (const auto& o : traj.obs) {
    if (o.d == 1) {
      sum1.add(o.y);
      ++n1;
    } else {
      sum0.add(o.y);
      ++n0;
    }
  }
  if (n1 == 0 || n0 == 0) throw std::invalid_argument("HT variance needs both treatment groups");
  const double ybar1 = sum1.value() / static_cast<double>(n1);
  const double ybar0 = sum0.value() / static_cast<double>(n0);
  CompensatedSum acc;
  for (const auto& o : traj.obs) {
    const double p = propensity(o.x);
    if (!(p > 0.0 && p < 1.0)) throw std::domain_error("propensity outside (0, 1)");
    const double term = o.d == 1 ? (o.y - ybar0) / p : -(o.y - ybar1) / (1.0 - p);
    acc.add(term * term);
  }
  return acc.value() / static_cast<double>(traj.T());
}

ConfidenceInterval confidence_interval(double psi_hat, double sigma2, std::size_t T, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
  if (!(sigma2 >= 0.0)) throw std::invalid_argument("confidence interval needs sigma2 >= 0");
  if (T == 0) throw std::invalid_argument("confidence interval needs T >= 1");
  const double z = normal_quantile(1.0 - alpha / 2.0);
  const double half = z * std::sqrt(sigma2 / static_cast<double>(T));
  return {psi_hat - half, psi_hat + half};
}

VarianceEstimate estimate_variance(const VarianceMethod& method, const PhiSeries& phis,
                                   const Trajectory* traj, const PropensityModel* propensity) {
  method.validate();
  switch (method.kind) {
    case VarianceMethod::Kind::kBatchMeans:
      return {var_batch_means(phis, method.theta), false};
    case VarianceMethod::Kind::kMDependent: {
      const MDepVariance v = var_mdep(phis, method.m);
      return {v.value, v.degenerate};
    }
    case VarianceMethod::Kind::kIidPlugin:
      return {var_iid_plugin(phis), false};
    case VarianceMethod::Kind::kHtPlugin:
      if (!traj || !propensity) throw std::invalid_argument("ht-plugin variance needs trajectory and propensity");
      return {var_ht(*traj, *propensity), false};
  }
  throw std::invalid_argument("unknown variance method");
}

EstimateReport make_report(const EstimatorResult& result, const VarianceEstimate& variance,
                           double alpha) {
  EstimateReport report;
  report.estimator = result.phis.estimator;
  report.psi_hat = result.psi_hat;
  report.sigma2_hat = variance.value;
  report.alpha = alpha;
  report.T = result.phis.values.size();
  report.degenerate = variance.degenerate || variance.value < 0.0;
  const ConfidenceInterval ci =
      confidence_interval(result.psi_hat, std::max(variance.value, 0.0), report.T, alpha);
  report.ci_low = ci.lo;
  report.ci_high = ci.hi;
  return report;
}

}  // namespace dml4ssi
