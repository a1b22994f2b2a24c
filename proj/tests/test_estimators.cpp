#include <doctest.h>

#include <cmath>

#include "dml4ssi/dgp.hpp"
#include "dml4ssi/estimators.hpp"
#include "test_util.hpp"

using namespace dml4ssi;
using testutil::nuis;
using testutil::obs;
using testutil::outcome_by_arm;

namespace {

// Switchback trajectory with m = 1, state (D_{t-1}, X_{t-1}); d holds the
// burn-in assignment at index 0.
Trajectory sb_traj(const std::vector<int>& d, const std::vector<double>& y) {
  Trajectory t;
  t.regime = Regime::MDependent(1);
  t.design = SwitchbackDesign{1, 2, 0.5};
  t.h0 = {static_cast<double>(d[0]), 0.5};
  for (std::size_t i = 1; i < d.size(); ++i) {
    t.obs.push_back(obs({0.5}, d[i], {static_cast<double>(d[i - 1]), 0.5}, y[i - 1]));
  }
  return t;
}

}  // namespace

TEST_SUITE("estimators") {

TEST_CASE("phi_ade hand-evaluated examples") {
  const auto zero = nuis(outcome_by_arm(0.0, 0.0), 0.5);
  CHECK(phi_ade(obs({0.1}, 1, {0.0}, 0.0), zero) == 0.0);
  CHECK(phi_ade(obs({0.1}, 0, {0.0}, 0.0), zero) == 0.0);
  CHECK(phi_ade(obs({0.1}, 1, {0.0}, 3.0), nuis(outcome_by_arm(1.0, 2.0), 0.5)) == 3.0);
  CHECK(phi_ade(obs({0.1}, 0, {0.0}, 1.0), nuis(outcome_by_arm(1.0, 2.0), 0.2)) == 1.0);
}

TEST_CASE("phi_ade matches a direct formula on generated inputs") {
  Rng rng(RngStream{1, 0});
  for (int i = 0; i < 1000; ++i) {
    const double f0 = rng.normal(), f1 = rng.normal(), p = rng.uniform(0.05, 0.95), y = rng.normal();
    const int d = rng.bernoulli(0.5) ? 1 : 0;
    const double expected = (f1 - f0) + (d / p - (1 - d) / (1 - p)) * (y - (d ? f1 : f0));
    REQUIRE(phi_ade(obs({0.0}, d, {0.0}, y), nuis(outcome_by_arm(f0, f1), p)) ==
            doctest::Approx(expected).epsilon(1e-13));
  }
}

TEST_CASE("estimates are the mean of their score series") {
  const Trajectory t = simulate_ade_dgp(AdeDgpConfig{}, 777, RngStream{2, 0});
  const NuisanceSet oracle = oracle_nuisances(AdeDgpConfig{});
  const auto n = nuis(outcome_by_arm(0.3, 1.1, false), 0.4, false);
  for (const EstimatorResult& r : {psi_ade_dml(t, oracle), psi_plugin(t, oracle), psi_ssac(t, oracle),
                                   psi_ht_naive(t, *oracle.m), psi_dml_naive(t, n)}) {
    REQUIRE(r.phis.values.size() == t.T());
    CHECK(r.psi_hat == compensated_mean(r.phis.values));
    for (double v : r.phis.values) REQUIRE(std::isfinite(v));
  }
  const auto first = psi_ade_dml(Trajectory{t.h0, {t.obs[0]}, t.regime, {}}, oracle);
  CHECK(first.psi_hat == phi_ade(t.obs[0], oracle));
}

TEST_CASE("plug-in, HT and naive DML examples") {
  const Trajectory t = testutil::simple_traj({1, 0, 1}, {5.0, 2.0, -1.0});
  CHECK(psi_plugin(t, nuis(outcome_by_arm(1.0, 3.5), 0.5)).psi_hat == 2.5);
  CHECK(psi_ht_naive(testutil::simple_traj({1, 0}, {2.0, 0.0}), *constant_propensity(0.5)).psi_hat == 2.0);
  CHECK(psi_ht_naive(testutil::simple_traj({1, 0}, {0.0, 0.0}), *constant_propensity(0.3)).psi_hat == 0.0);
  CHECK(psi_dml_naive(testutil::simple_traj({1}, {3.0}), nuis(outcome_by_arm(1.0, 2.0, false), 0.5, false)).psi_hat == 3.0);
  CHECK_THROWS_AS(psi_dml_naive(t, nuis(outcome_by_arm(1.0, 2.0, true), 0.5, true)), std::invalid_argument);
}

TEST_CASE("formula collapses: zero outcome model reduces AIPW to HT") {
  const Trajectory t = simulate_ade_dgp(AdeDgpConfig{}, 500, RngStream{3, 0});
  const auto m = oracle_nuisances(AdeDgpConfig{}).m;
  NuisanceSet zero_no_h{outcome_by_arm(0.0, 0.0, false), m, 0.1, false};
  NuisanceSet zero_h{outcome_by_arm(0.0, 0.0, true), m, 0.1, true};
  const auto ht = psi_ht_naive(t, *m);
  CHECK(psi_dml_naive(t, zero_no_h).phis.values == ht.phis.values);
  CHECK(psi_ssac(t, zero_h).phis.values == ht.phis.values);
}

TEST_CASE("SSAC equals the ADE estimator bitwise") {
  Rng rng(RngStream{4, 0});
  for (int trial = 0; trial < 20; ++trial) {
    const Trajectory t = simulate_ade_dgp(AdeDgpConfig{}, 1 + rng.below(300), RngStream{4, static_cast<std::uint64_t>(trial)});
    const NuisanceSet n = oracle_nuisances(AdeDgpConfig{});
    const auto a = psi_ade_dml(t, n), b = psi_ssac(t, n);
    REQUIRE(a.psi_hat == b.psi_hat);
    REQUIRE(a.phis.values == b.phis.values);
  }
}

TEST_CASE("zero-noise ADE with oracle nuisances gives the plug-in truth per step") {
  AdeDgpConfig quiet;
  quiet.y_noise_sd = 0.0;
  quiet.h_noise_sd = 0.0;
  const Trajectory t = simulate_ade_dgp(quiet, 200, RngStream{5, 0});
  const auto r = psi_ade_dml(t, oracle_nuisances(quiet));
  for (double v : r.phis.values) REQUIRE(v == doctest::Approx(4.0).epsilon(1e-14));
  CHECK(r.psi_hat == doctest::Approx(4.0).epsilon(1e-14));
}

TEST_CASE("phi_gate: mixed window keeps only the plug-in term") {
  // d: burn-in 0, then 1 -> window (0, 1) is mixed at t=1.
  const Trajectory t = sb_traj({0, 1, 1}, {7.0, 9.0});
  const auto f = testutil::outcome_fn([](int d, std::span<const double>, std::span<const double> h) {
    return 1.0 + d + 10.0 * h[0];
  });
  const NuisanceSet n{f, constant_propensity(0.5), 0.25, true};
  const SwitchbackDesign& design = *t.design;
  CHECK(phi_gate(t, 1, n, design) == (1.0 + 1 + 10.0) - (1.0 + 0 + 0.0));
  // t=2: window (1, 1) is all-ones; residual y - f(1, x, h) = 9 - 12 = -3.
  const double pi = switchback_window_prob(design, 2, WindowValue::kAllOnes);
  CHECK(phi_gate(t, 2, n, design) == doctest::Approx(11.0 + (-3.0) / pi).epsilon(1e-15));
}

TEST_CASE("GATE and switchback-HT hand arithmetic with the enumerated window probability") {
  // m = 5, block_len = 10, a window that is all-ones at t = 10.
  const SwitchbackDesign design{5, 10, 0.5};
  Trajectory t;
  t.regime = Regime::MDependent(5);
  t.design = design;
  t.h0 = std::vector<double>(10, 1.0);
  for (int i = 0; i < 10; ++i) t.obs.push_back(obs({0.0}, 1, std::vector<double>(10, 1.0), 3.0));
  const NuisanceSet zero{outcome_by_arm(0.0, 0.0), constant_propensity(0.5), 0.25, true};
  CHECK(switchback_window_prob(design, 10, WindowValue::kAllOnes) == 0.375);
  CHECK(phi_gate(t, 10, zero, design) == doctest::Approx(8.0).epsilon(1e-15));
  Trajectory single = t;
  single.obs.resize(1);
  const double pi1 = switchback_window_prob(design, 1, WindowValue::kAllOnes);
  CHECK(psi_sb_ht(single, design).psi_hat == doctest::Approx(3.0 / pi1).epsilon(1e-15));
  CHECK(psi_gate_dml(single, zero, design).psi_hat == phi_gate(single, 1, zero, design));
  for (auto& o : t.obs) o.y = 0.0;
  CHECK(psi_sb_ht(t, design).psi_hat == 0.0);
}

TEST_CASE("oracle f with zero noise gives the GATE on constant windows") {
  SwitchbackDgpConfig quiet;
  quiet.y_noise_sd = 0.0;
  const Trajectory t = simulate_switchback_dgp(quiet, 2000, RngStream{6, 0});
  const NuisanceSet n = oracle_nuisances(quiet);
  const double truth = true_gate(quiet).psi_star;
  const auto r = psi_gate_dml(t, n, quiet.design);
  for (double v : r.phis.values) REQUIRE(v == doctest::Approx(truth).epsilon(1e-13));
}

TEST_CASE("with no constant window, GATE equals the counterfactual plug-in") {
  // Alternating treatment with m = 1: every window (D_{t-1}, D_t) is mixed.
  std::vector<int> d;
  std::vector<double> y;
  for (int i = 0; i < 41; ++i) d.push_back(i % 2);
  for (int i = 0; i < 40; ++i) y.push_back(0.1 * i);
  const Trajectory t = sb_traj(d, y);
  const auto f = testutil::outcome_fn([](int dd, std::span<const double> x, std::span<const double> h) {
    return dd * 2.0 + x[0] + 0.7 * h[0] - h[1];
  });
  const NuisanceSet n{f, constant_propensity(0.5), 0.25, true};
  const auto a = psi_gate_dml(t, n, *t.design);
  const auto b = psi_plugin_counterfactual(t, n, *t.design);
  CHECK(a.phis.values == b.phis.values);
}

TEST_CASE("design must match the trajectory regime") {
  const Trajectory t = sb_traj({0, 1, 1}, {1.0, 2.0});
  const NuisanceSet n{outcome_by_arm(0.0, 0.0), constant_propensity(0.5), 0.25, true};
  CHECK_THROWS_AS(psi_gate_dml(t, n, SwitchbackDesign{2, 4, 0.5}), std::invalid_argument);
  CHECK_THROWS_AS(phi_gate(t, 0, n, *t.design), std::out_of_range);
}

TEST_CASE("estimator labels round-trip") {
  for (EstimatorKind k : kAllEstimators) CHECK(parse_estimator(estimator_label(k)) == k);
  CHECK_FALSE(parse_estimator("aipw").has_value());
}

}  // TEST_SUITE
