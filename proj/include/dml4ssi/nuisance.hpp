#pragma once

#include <memory>
#include <span>

#include "dml4ssi/core.hpp"
#include "dml4ssi/dgp.hpp"
#include "dml4ssi/forest.hpp"

namespace dml4ssi {

// Outcome regression f(d, x, h).
class OutcomeModel {
 public:
  virtual ~OutcomeModel() = default;
  virtual double operator()(int d, std::span<const double> x, std::span<const double> h) const = 0;
  virtual bool uses_shared_state() const = 0;
};

// Propensity model m(x) = P(D = 1 | X = x).
class PropensityModel {
 public:
  virtual ~PropensityModel() = default;
  virtual double operator()(std::span<const double> x) const = 0;
};

struct NuisanceSet {
  std::shared_ptr<const OutcomeModel> f;
  std::shared_ptr<const PropensityModel> m;
  double zeta = 0.1;
  bool includes_shared_state = true;
};

// Regression of y on (d, x, h), or on (d, x) when include_shared_state is false.
std::shared_ptr<const OutcomeModel> fit_outcome_model(const Trajectory& aux,
                                                      bool include_shared_state,
                                                      const Learner& learner,
                                                      const RngStream& stream);
std::shared_ptr<const OutcomeModel> fit_outcome_model(const Trajectory& aux,
                                                      bool include_shared_state,
                                                      const ForestParams& params);

// Regression of d on x, predictions clipped to [zeta, 1 - zeta].
std::shared_ptr<const PropensityModel> fit_propensity_model(const Trajectory& aux, double zeta,
                                                            const Learner& learner,
                                                            const RngStream& stream);
std::shared_ptr<const PropensityModel> fit_propensity_model(const Trajectory& aux, double zeta,
                                                            const ForestParams& params);

// Known propensity, e.g. a randomized design.
std::shared_ptr<const PropensityModel> constant_propensity(double p);

// Closed-form f* and m* of a built-in model. With include_shared_state=false
// the outcome model is E[Y | D, X], marginalizing the shared state (for the
// ADE model over t = 1..T).
NuisanceSet oracle_nuisances(const DgpConfig& cfg, bool include_shared_state = true,
                             std::size_t T = 1000);

}  // namespace dml4ssi
