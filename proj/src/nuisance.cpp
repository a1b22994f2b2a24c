#include "dml4ssi/nuisance.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace dml4ssi {
namespace {

void require_valid(const Trajectory& aux) {
  const ValidationResult v = validate_trajectory(aux);
  if (!v.ok()) throw std::invalid_argument("auxiliary trajectory invalid: " + v.summary());
}

class LearnedOutcome final : public OutcomeModel {
 public:
  LearnedOutcome(std::shared_ptr<const Regressor> reg, std::size_t p_x, std::size_t p_h,
                 bool include_h)
      : reg_(std::move(reg)), p_x_(p_x), p_h_(p_h), include_h_(include_h) {}

  double operator()(int d, std::span<const double> x, std::span<const double> h) const override {
    if (x.size() != p_x_ || (include_h_ && h.size() != p_h_)) {
      throw std::invalid_argument("outcome model: dimension mismatch");
    }
    thread_local std::vector<double> row;
    row.clear();
    row.push_back(static_cast<double>(d));
    row.insert(row.end(), x.begin(), x.end());
    if (include_h_) row.insert(row.end(), h.begin(), h.end());
    return reg_->predict(row);
  }

  bool uses_shared_state() const override { return include_h_; }

 private:
  std::shared_ptr<const Regressor> reg_;
  std::size_t p_x_;
  std::size_t p_h_;
  bool include_h_;
};

class LearnedPropensity final : public PropensityModel {
 public:
  LearnedPropensity(std::shared_ptr<const Regressor> reg, double zeta)
      : reg_(std::move(reg)), zeta_(zeta) {}

  double operator()(std::span<const double> x) const override {
    return std::clamp(reg_->predict(x), zeta_, 1.0 - zeta_);
  }

 private:
  std::shared_ptr<const Regressor> reg_;
  double zeta_;
};

class ConstantPropensity final : public PropensityModel {
 public:
  explicit ConstantPropensity(double p) : p_(p) {}
  double operator()(std::span<const double>) const override { return p_; }

 private:
  double p_;
};

class AdeOracleOutcome final : public OutcomeModel {
 public:
  AdeOracleOutcome(AdeDgpConfig cfg, bool include_h, double mean_state)
      : cfg_(cfg), include_h_(include_h), mean_state_(mean_state) {}

  double operator()(int d, std::span<const double> x, std::span<const double> h) const override {
    if (include_h_) return ade_outcome_mean(cfg_, d, x, h);
    const double h_bar[1] = {mean_state_};
    return ade_outcome_mean(cfg_, d, x, h_bar);
  }
  bool uses_shared_state() const override { return include_h_; }

 private:
  AdeDgpConfig cfg_;
  bool include_h_;
  double mean_state_;
};

class AdeOraclePropensity final : public PropensityModel {
 public:
  explicit AdeOraclePropensity(double zeta) : zeta_(zeta) {}
  double operator()(std::span<const double> x) const override { return propensity_true(x[0], zeta_); }

 private:
  double zeta_;
};

class SwitchbackOracleOutcome final : public OutcomeModel {
 public:
  SwitchbackOracleOutcome(SwitchbackDgpConfig cfg, bool include_h)
      : cfg_(cfg), include_h_(include_h) {}

  double operator()(int d, std::span<const double> x, std::span<const double> h) const override {
    if (include_h_) return switchback_outcome_mean(cfg_, d, x, h);
    // Past treatments are Bernoulli(treat_prob) marginally.
    const double p = cfg_.design.treat_prob;
    const double spill =
        cfg_.design.m == 0
            ? 0.0
            : cfg_.spill_coef * (p * std::exp(-1.0 / cfg_.spill_scale) + (1.0 - p));
    return std::sin(2.0 * std::numbers::pi * x[0]) + cfg_.direct_coef * static_cast<double>(d) +
           spill + cfg_.intercept;
  }
  bool uses_shared_state() const override { return include_h_; }

 private:
  SwitchbackDgpConfig cfg_;
  bool include_h_;
};

FeatureMatrix outcome_features(const Trajectory& aux, bool include_h) {
  const std::size_t p = 1 + aux.p_x() + (include_h ? aux.p_h() : 0);
  FeatureMatrix features(aux.T(), p);
  for (std::size_t i = 0; i < aux.T(); ++i) {
    const Observation& o = aux.obs[i];
    auto row = features.row(i);
    row[0] = static_cast<double>(o.d);
    std::copy(o.x.begin(), o.x.end(), row.begin() + 1);
    if (include_h) std::copy(o.h.begin(), o.h.end(), row.begin() + 1 + static_cast<std::ptrdiff_t>(o.x.size()));
  }
  return features;
}

}  // namespace

std::shared_ptr<const OutcomeModel> fit_outcome_model(const Trajectory& aux,
                                                      bool include_shared_state,
                                                      const Learner& learner,
                                                      const RngStream& stream) {
  require_valid(aux);
  const FeatureMatrix features = outcome_features(aux, include_shared_state);
  std::vector<double> targets(aux.T());
  for (std::size_t i = 0; i < aux.T(); ++i) targets[i] = aux.obs[i].y;
  return std::make_shared<LearnedOutcome>(learner.fit(features, targets, stream), aux.p_x(),
                                          aux.p_h(), include_shared_state);
}

std::shared_ptr<const OutcomeModel> fit_outcome_model(const Trajectory& aux,
                                                      bool include_shared_state,
                                                      const ForestParams& params) {
  return fit_outcome_model(aux, include_shared_state, ForestLearner(params), params.seed);
}

std::shared_ptr<const PropensityModel> fit_propensity_model(const Trajectory& aux, double zeta,
                                                            const Learner& learner,
                                                            const RngStream& stream) {
  if (!(zeta > 0.0 && zeta < 0.5)) throw std::invalid_argument("zeta must lie in (0, 0.5)");
  require_valid(aux);
  FeatureMatrix features(aux.T(), aux.p_x());
  std::vector<double> targets(aux.T());
  for (std::size_t i = 0; i < aux.T(); ++i) {
    std::copy(aux.obs[i].x.begin(), aux.obs[i].x.end(), features.row(i).begin());
    targets[i] = static_cast<double>(aux.obs[i].d);
  }
  return std::make_shared<LearnedPropensity>(learner.fit(features, targets, stream), zeta);
}

std::shared_ptr<const PropensityModel> fit_propensity_model(const Trajectory& aux, double zeta,
                                                            const ForestParams& params) {
  return fit_propensity_model(aux, zeta, ForestLearner(params), params.seed);
}

std::shared_ptr<const PropensityModel> constant_propensity(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("propensity must lie in (0, 1)");
  return std::make_shared<ConstantPropensity>(p);
}

NuisanceSet oracle_nuisances(const DgpConfig& cfg, bool include_shared_state, std::size_t T) {
  NuisanceSet set;
  set.includes_shared_state = include_shared_state;
  if (const auto* ade = std::get_if<AdeDgpConfig>(&cfg)) {
    ade->validate();
    if (T == 0) throw std::invalid_argument("oracle_nuisances: T must be >= 1");
    CompensatedSum acc;
    for (std::size_t t = 1; t <= T; ++t) acc.add(ade_state_mean(*ade, t));
    const double h_bar = acc.value() / static_cast<double>(T);
    set.f = std::make_shared<AdeOracleOutcome>(*ade, include_shared_state, h_bar);
    set.m = std::make_shared<AdeOraclePropensity>(ade->zeta);
    set.zeta = ade->zeta;
    return set;
  }
  if (const auto* sb = std::get_if<SwitchbackDgpConfig>(&cfg)) {
    sb->validate();
    set.f = std::make_shared<SwitchbackOracleOutcome>(*sb, include_shared_state);
    set.m = constant_propensity(sb->design.treat_prob);
    set.zeta = std::min(sb->design.treat_prob, 1.0 - sb->design.treat_prob) / 2.0;
    return set;
  }
  throw std::invalid_argument("oracle_nuisances: unsupported model kind");
}

}  // namespace dml4ssi
