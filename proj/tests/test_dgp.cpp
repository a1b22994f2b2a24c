#include <doctest.h>

#include <cmath>
#include <numbers>

#include "dml4ssi/dgp.hpp"
#include "test_util.hpp"

using namespace dml4ssi;

namespace {

// Independent oracle for the window probability: average over offsets of
// p^k, with k counted by walking every position of the window.
double window_prob_walk(const SwitchbackDesign& d, long long t, double p) {
  double total = 0.0;
  const long long len = static_cast<long long>(d.block_len);
  for (long long o = 1; o <= len; ++o) {
    auto block_of = [&](long long pos) { return pos < o ? 0 : 1 + (pos - o) / len; };
    int k = 1;
    for (long long pos = t - static_cast<long long>(d.m) + 1; pos <= t; ++pos) {
      if (block_of(pos) != block_of(pos - 1)) ++k;
    }
    total += std::pow(p, k);
  }
  return total / static_cast<double>(len);
}

}  // namespace

TEST_SUITE("dgp") {

TEST_CASE("ar1_step examples") {
  const AdeDgpConfig cfg;
  CHECK(ar1_step(1.0, 0.0, cfg) == 1.0);
  CHECK(ar1_step(3.0, 0.0, cfg) == 2.5);
  CHECK(ar1_step(1.0, 0.5, cfg) == 1.5);
}

TEST_CASE("propensity_true clips to [zeta, 1 - zeta]") {
  CHECK(propensity_true(0.05, 0.1) == 0.1);
  CHECK(propensity_true(0.5, 0.1) == 0.5);
  CHECK(propensity_true(1.7, 0.1) == 0.9);
}

TEST_CASE("config validation names the violated invariant") {
  AdeDgpConfig a;
  a.zeta = 0.6;
  CHECK_THROWS_WITH_AS(a.validate(), doctest::Contains("zeta"), std::invalid_argument);
  a = AdeDgpConfig{};
  a.ar_coef = 1.0;
  CHECK_THROWS_WITH_AS(a.validate(), doctest::Contains("ar_coef"), std::invalid_argument);
  SwitchbackDgpConfig s;
  s.design.block_len = 5;
  CHECK_THROWS_WITH_AS(s.validate(), doctest::Contains("block_len"), std::invalid_argument);
}

TEST_CASE("zero-noise ADE outcome evaluates the structural formula") {
  const AdeDgpConfig cfg;
  const std::vector<double> x = {0.25, 0, 0, 0, 0, 0, 0, 0, 0, 0};
  const std::vector<double> h = {1.0};
  CHECK(ade_outcome_mean(cfg, 1, x, h) == doctest::Approx(4.0).epsilon(1e-15));

  AdeDgpConfig quiet;
  quiet.y_noise_sd = 0.0;
  quiet.h_noise_sd = 0.0;
  const Trajectory t = simulate_ade_dgp(quiet, 500, RngStream{1, 2});
  for (const auto& o : t.obs) {
    REQUIRE(o.h[0] == 1.0);
    REQUIRE(o.y == ade_outcome_mean(quiet, o.d, o.x, o.h));
  }
}

TEST_CASE("ADE simulation with default parameters validates and is reproducible") {
  const AdeDgpConfig cfg;
  const Trajectory a = simulate_ade_dgp(cfg, 1000, RngStream{3, 0});
  const Trajectory b = simulate_ade_dgp(cfg, 1000, RngStream{3, 0});
  CHECK(validate_trajectory(a).ok());
  CHECK(a.T() == 1000);
  CHECK(a.p_x() == 10);
  CHECK(a.regime == Regime::GeometricErgodic());
  for (std::size_t i = 0; i < a.T(); ++i) REQUIRE(a.obs[i].y == b.obs[i].y);
}

TEST_CASE("ADE treatment frequency follows the clipped propensity") {
  const AdeDgpConfig cfg;
  const Trajectory t = simulate_ade_dgp(cfg, 100000, RngStream{4, 0});
  // Oracle: E[clip(X1)] for X1 ~ N(1, 1), by quadrature.
  double expected = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = (i + 0.5) / n;
    expected += propensity_true(1.0 + normal_quantile(u), 0.1);
  }
  expected /= n;
  double freq = 0.0;
  for (const auto& o : t.obs) freq += o.d;
  freq /= static_cast<double>(t.T());
  CHECK(std::abs(freq - expected) < 3.0 * std::sqrt(expected * (1 - expected) / t.T()));
}

TEST_CASE("stationary AR(1) moments of the shared state") {
  AdeDgpConfig cfg;
  cfg.h0_mode = H0Mode::StationaryDraw();
  const Trajectory t = simulate_ade_dgp(cfg, 100100, RngStream{5, 0});
  std::vector<double> h;
  for (std::size_t i = 100; i < t.T(); ++i) h.push_back(t.obs[i].h[0]);
  const double n = static_cast<double>(h.size());
  // Long-run sd of an AR(1) mean: sigma / (1 - a).
  const double se = 1.0 / (1.0 - 0.75) / std::sqrt(n);
  CHECK(std::abs(testutil::sample_mean(h) - 1.0) < 3.0 * se);
  CHECK(testutil::sample_var(h) == doctest::Approx(16.0 / 7.0).epsilon(0.05));
}

TEST_CASE("true_ade examples") {
  AdeDgpConfig cfg;
  CHECK(true_ade(cfg).psi_star == 4.0);
  cfg.interaction_coef = 0.0;
  CHECK(true_ade(cfg).psi_star == 2.0);

  AdeDgpConfig shifted;
  shifted.h0_mode = H0Mode::Deterministic(5.0);
  const std::size_t T = 200;
  double acc = 0.0;
  for (std::size_t t = 1; t <= T; ++t) acc += 1.0 + 4.0 * std::pow(0.75, static_cast<double>(t));
  const double expected = 2.0 + 2.0 * acc / T;
  CHECK(true_ade(shifted, T).psi_star == doctest::Approx(expected).epsilon(1e-14));
  const TruthSpec mc = oracle_ade(shifted, T, 400, RngStream{6, 0});
  CHECK(std::abs(mc.psi_star - expected) < 3.0 * mc.oracle_se);
}

TEST_CASE("true_gate examples and oracle agreement") {
  SwitchbackDgpConfig cfg;
  CHECK(true_gate(cfg).psi_star == doctest::Approx(2.0 + 2.0 * (std::exp(-1.0 / 3.0) - 1.0)).epsilon(1e-15));
  CHECK(true_gate(cfg).psi_star == doctest::Approx(1.433062).epsilon(1e-6));
  const TruthSpec mc = oracle_gate(cfg, 100000, RngStream{7, 0});
  CHECK(std::abs(mc.psi_star - true_gate(cfg).psi_star) < 3.0 * mc.oracle_se);
  SwitchbackDgpConfig no_spill = cfg;
  no_spill.spill_coef = 0.0;
  CHECK(true_gate(no_spill).psi_star == 2.0);
  SwitchbackDgpConfig wide = cfg;
  wide.spill_scale = 1e12;
  CHECK(true_gate(wide).psi_star == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("zero-noise switchback outcomes under forced assignment") {
  SwitchbackDgpConfig cfg;
  cfg.y_noise_sd = 0.0;
  const std::vector<double> x0 = {0.0};
  const std::vector<double> ones = {1, 1, 1, 1, 1, 0, 0, 0, 0, 0};
  const std::vector<double> zeros = {0, 0, 0, 0, 0, 0, 0, 0, 0, 0};
  CHECK(switchback_outcome_mean(cfg, 1, x0, ones) == doctest::Approx(1.0 + 2.0 * std::exp(-1.0 / 3.0)).epsilon(1e-15));
  CHECK(switchback_outcome_mean(cfg, 0, x0, zeros) == 1.0);

  const Trajectory t1 = simulate_switchback_dgp(cfg, 50, RngStream{8, 0}, 1);
  for (const auto& o : t1.obs) {
    REQUIRE(o.d == 1);
    REQUIRE(o.y == doctest::Approx(std::sin(2 * std::numbers::pi * o.x[0]) + 1.0 + 2.0 * std::exp(-1.0 / 3.0)));
  }
  CHECK(t1.regime == Regime::MDependent(5));
  CHECK(validate_trajectory(t1).ok());
}

TEST_CASE("switchback state carries the previous m treatments and covariates") {
  const SwitchbackDgpConfig cfg;
  const Trajectory t = simulate_switchback_dgp(cfg, 300, RngStream{9, 0});
  CHECK(t.h0 == t.obs[0].h);
  for (std::size_t i = 1; i < t.T(); ++i) {
    const auto& h = t.obs[i].h;
    REQUIRE(h[4] == static_cast<double>(t.obs[i - 1].d));
    REQUIRE(h[9] == t.obs[i - 1].x[0]);
    for (std::size_t k = 0; k + 1 < 5; ++k) REQUIRE(h[k] == t.obs[i - 1].h[k + 1]);
  }
}

TEST_CASE("switchback assignments are constant within blocks") {
  const SwitchbackDesign d{5, 10, 0.5};
  Rng rng(RngStream{10, 0});
  for (int rep = 0; rep < 200; ++rep) {
    const auto a = draw_switchback_assignments(d, 100, rng);
    REQUIRE(a.assignments.size() == 105);
    REQUIRE(a.offset >= 1);
    REQUIRE(a.offset <= 10);
    for (std::size_t i = 1; i < a.assignments.size(); ++i) {
      const long long p = static_cast<long long>(i) + 1 - 5;
      const bool boundary = p >= static_cast<long long>(a.offset) && (p - static_cast<long long>(a.offset)) % 10 == 0;
      if (!boundary) REQUIRE(a.assignments[i] == a.assignments[i - 1]);
    }
  }
}

TEST_CASE("degenerate designs") {
  Rng rng(RngStream{11, 0});
  const auto all = draw_switchback_assignments(SwitchbackDesign{5, 10, 1.0}, 50, rng);
  for (int v : all.assignments) REQUIRE(v == 1);
  // m = 0, block_len = 1: iid Bernoulli(1/2).
  const auto iid = draw_switchback_assignments(SwitchbackDesign{0, 1, 0.5}, 100000, rng);
  std::vector<double> a(iid.assignments.begin(), iid.assignments.end());
  std::vector<double> lead(a.begin(), a.end() - 1), lag(a.begin() + 1, a.end());
  CHECK(std::abs(testutil::sample_mean(a) - 0.5) < 3.0 * 0.5 / std::sqrt(100000.0));
  CHECK(std::abs(testutil::correlation(lead, lag)) < 0.02);
  for (std::size_t t : {1u, 7u, 100u}) {
    CHECK(switchback_window_prob(SwitchbackDesign{0, 3, 0.5}, t, WindowValue::kAllOnes) == 0.5);
  }
}

TEST_CASE("window probability hand-enumerated values") {
  CHECK(switchback_window_prob(SwitchbackDesign{5, 10, 0.5}, 50, WindowValue::kAllOnes) == doctest::Approx(0.375).epsilon(1e-15));
  CHECK(switchback_window_prob(SwitchbackDesign{5, 6, 0.5}, 50, WindowValue::kAllOnes) == doctest::Approx(7.0 / 24.0).epsilon(1e-15));
}

TEST_CASE("window probability property: walk oracle, symmetry and lower bound") {
  Rng rng(RngStream{12, 0});
  for (int trial = 0; trial < 400; ++trial) {
    const std::size_t m = rng.below(8);
    const std::size_t len = m + 1 + rng.below(10);
    const double p = 0.05 + 0.9 * rng.uniform();
    const std::size_t t = 1 + rng.below(60);
    const SwitchbackDesign d{m, len, p};
    const double ones = switchback_window_prob(d, t, WindowValue::kAllOnes);
    const double zeros = switchback_window_prob(d, t, WindowValue::kAllZeros);
    REQUIRE(ones == doctest::Approx(window_prob_walk(d, static_cast<long long>(t), p)).epsilon(1e-13));
    REQUIRE(zeros == doctest::Approx(window_prob_walk(d, static_cast<long long>(t), 1 - p)).epsilon(1e-13));
    const SwitchbackDesign half{m, len, 0.5};
    const double h1 = switchback_window_prob(half, t, WindowValue::kAllOnes);
    REQUIRE(h1 == switchback_window_prob(half, t, WindowValue::kAllZeros));
    REQUIRE(h1 >= static_cast<double>(len - m) / (2.0 * len) - 1e-15);
  }
}

TEST_CASE("empirical window frequencies match enumeration") {
  for (auto [len, m] : {std::pair<std::size_t, std::size_t>{10, 5}, {6, 5}, {4, 1}}) {
    const SwitchbackDesign d{m, len, 0.5};
    const std::size_t t = 3 * len + 2;
    Rng rng(RngStream{13, len * 100 + m});
    const int n = 100000;
    int hits = 0;
    for (int i = 0; i < n; ++i) {
      const auto a = draw_switchback_assignments(d, t, rng);
      bool all = true;
      for (std::size_t k = t - 1; k < t + m; ++k) all = all && a.assignments[k] == 1;
      hits += all;
    }
    const double pi = switchback_window_prob(d, t, WindowValue::kAllOnes);
    const double freq = static_cast<double>(hits) / n;
    CHECK(std::abs(freq - pi) < 3.0 * std::sqrt(pi * (1 - pi) / n));
  }
}

TEST_CASE("switchback outcomes decorrelate once windows share no block") {
  // Y_t depends on D_{t-m..t}; two windows k apart can share a design block
  // while k < m + block_len, so independence starts at lag m + block_len.
  const SwitchbackDgpConfig cfg;
  const Trajectory t = simulate_switchback_dgp(cfg, 100000, RngStream{14, 0});
  std::vector<double> y;
  for (const auto& o : t.obs) y.push_back(o.y);
  auto lag_corr = [&](std::size_t k) {
    std::vector<double> a(y.begin() + k, y.end()), b(y.begin(), y.end() - k);
    return testutil::correlation(a, b);
  };
  for (std::size_t k : {15u, 17u, 25u}) CHECK(std::abs(lag_corr(k)) < 0.02);
  CHECK(lag_corr(6) > 0.1);
}

}  // TEST_SUITE
