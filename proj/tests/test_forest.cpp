#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <cmath>
#include <set>
#include <sstream>

#include "dml4ssi/dgp.hpp"
#include "dml4ssi/forest.hpp"
#include "dml4ssi/nuisance.hpp"
#include "test_util.hpp"

using namespace dml4ssi;

namespace {

FeatureMatrix matrix(const std::vector<std::vector<double>>& rows) {
  FeatureMatrix m(rows.size(), rows.empty() ? 0 : rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
  }
  return m;
}

ForestParams single_tree(std::size_t min_leaf = 1) {
  ForestParams p;
  p.n_trees = 1;
  p.bootstrap = false;
  p.min_samples_leaf = min_leaf;
  return p;
}

// Brute-force CART: every feature, every midpoint, SSE recomputed from scratch.
struct NaiveTree {
  const FeatureMatrix& X;
  const std::vector<double>& y;
  std::size_t min_leaf;

  struct Node {
    int feature = -1;
    double thr = 0, value = 0;
    std::unique_ptr<Node> left, right;
  };

  static double sse(const std::vector<double>& v) {
    double m = 0;
    for (double e : v) m += e;
    m /= static_cast<double>(v.size());
    double s = 0;
    for (double e : v) s += (e - m) * (e - m);
    return s;
  }

  std::unique_ptr<Node> grow(const std::vector<std::size_t>& idx) const {
    auto node = std::make_unique<Node>();
    std::vector<double> ys;
    for (auto i : idx) ys.push_back(y[i]);
    double mean = 0;
    for (double e : ys) mean += e;
    mean /= static_cast<double>(ys.size());
    node->value = mean;
    const double lo = *std::min_element(ys.begin(), ys.end()), hi = *std::max_element(ys.begin(), ys.end());
    if (idx.size() < 2 * min_leaf || lo == hi) return node;
    const double parent = sse(ys);
    double best = parent;
    int bf = -1;
    double bt = 0;
    for (std::size_t j = 0; j < X.cols(); ++j) {
      std::set<double> vals;
      for (auto i : idx) vals.insert(X(i, j));
      std::vector<double> sorted(vals.begin(), vals.end());
      for (std::size_t k = 0; k + 1 < sorted.size(); ++k) {
        const double thr = 0.5 * (sorted[k] + sorted[k + 1]);
        std::vector<double> l, r;
        for (auto i : idx) (X(i, j) <= thr ? l : r).push_back(y[i]);
        if (l.size() < min_leaf || r.size() < min_leaf) continue;
        const double s = sse(l) + sse(r);
        if (s < best - 1e-9 * std::max(1.0, parent)) {
          best = s;
          bf = static_cast<int>(j);
          bt = thr;
        }
      }
    }
    if (bf < 0) return node;
    node->feature = bf;
    node->thr = bt;
    std::vector<std::size_t> li, ri;
    for (auto i : idx) (X(i, static_cast<std::size_t>(bf)) <= bt ? li : ri).push_back(i);
    node->left = grow(li);
    node->right = grow(ri);
    return node;
  }

  static double predict(const Node* n, std::span<const double> x) {
    while (n->feature >= 0) n = x[static_cast<std::size_t>(n->feature)] <= n->thr ? n->left.get() : n->right.get();
    return n->value;
  }
};

}  // namespace

TEST_SUITE("nuisance") {

TEST_CASE("single training row gives a constant forest") {
  const auto f = fit_regression_forest(matrix({{1.0, 2.0}}), std::vector<double>{3.5}, ForestParams{});
  for (const auto& tree : f.trees()) CHECK(tree.nodes().size() == 1);
  CHECK(predict_forest(f, std::vector<double>{-100.0, 7.0}) == 3.5);
}

TEST_CASE("constant targets predict exactly that constant") {
  Rng rng(RngStream{1, 1});
  std::vector<std::vector<double>> rows(100, std::vector<double>(3));
  for (auto& r : rows) for (auto& v : r) v = rng.normal();
  const std::vector<double> y(100, 0.1 + 0.2);
  const auto f = fit_regression_forest(matrix(rows), y, ForestParams{});
  for (int i = 0; i < 20; ++i) {
    CHECK(predict_forest(f, std::vector<double>{rng.normal(), rng.normal(), rng.normal()}) == 0.1 + 0.2);
  }
}

TEST_CASE("perfect single split on a step") {
  std::vector<std::vector<double>> rows;
  std::vector<double> y;
  for (int i = 0; i < 50; ++i) { rows.push_back({-1.0}); y.push_back(0.0); }
  for (int i = 0; i < 50; ++i) { rows.push_back({1.0}); y.push_back(1.0); }
  const auto f = fit_regression_forest(matrix(rows), y, single_tree());
  CHECK(predict_forest(f, std::vector<double>{-1.0}) == 0.0);
  CHECK(predict_forest(f, std::vector<double>{1.0}) == 1.0);
  REQUIRE(f.trees()[0].nodes()[0].feature == 0);
  CHECK(f.trees()[0].nodes()[0].threshold == 0.0);
}

TEST_CASE("split ties go to the lowest feature, then the smallest threshold") {
  // Thresholds 0.5 and 2.5 reduce SSE equally; column 1 duplicates column 0.
  const auto X = matrix({{0, 0}, {1, 1}, {2, 2}, {3, 3}});
  const std::vector<double> y = {0, 1, 1, 0};
  ForestParams p = single_tree();
  p.max_depth = 1;
  const auto f = fit_regression_forest(X, y, p);
  const TreeNode& root = f.trees()[0].nodes()[0];
  CHECK(root.feature == 0);
  CHECK(root.threshold == 0.5);
}

TEST_CASE("single unbootstrapped tree matches a brute-force CART oracle") {
  Rng rng(RngStream{2, 2});
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 5 + rng.below(60), p = 1 + rng.below(3);
    const std::size_t min_leaf = 1 + rng.below(4);
    FeatureMatrix X(n, p);
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < p; ++j) X(i, j) = static_cast<double>(rng.below(8));  // repeated values
      y[i] = std::sin(X(i, 0)) + 0.3 * rng.normal();
    }
    const auto forest = fit_regression_forest(X, y, single_tree(min_leaf));
    NaiveTree oracle{X, y, min_leaf};
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), std::size_t{0});
    const auto root = oracle.grow(all);
    for (int q = 0; q < 30; ++q) {
      std::vector<double> x(p);
      for (auto& v : x) v = rng.uniform(-1.0, 8.0);
      REQUIRE(predict_forest(forest, x) == doctest::Approx(NaiveTree::predict(root.get(), x)).epsilon(1e-9));
    }
  }
}

TEST_CASE("forest invariants on generated data") {
  Rng rng(RngStream{3, 3});
  for (int trial = 0; trial < 15; ++trial) {
    const std::size_t n = 1 + rng.below(200), p = 1 + rng.below(5);
    FeatureMatrix X(n, p);
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < p; ++j) X(i, j) = rng.normal();
      y[i] = rng.uniform();
    }
    ForestParams params;
    params.n_trees = 10;
    params.min_samples_leaf = 1 + rng.below(5);
    params.feature_fraction = 0.3 + 0.7 * rng.uniform();
    params.seed = RngStream{static_cast<std::uint64_t>(trial), 0};
    const auto f = fit_regression_forest(X, y, params);
    const double lo = *std::min_element(y.begin(), y.end()), hi = *std::max_element(y.begin(), y.end());
    for (const auto& tree : f.trees()) {
      for (const auto& node : tree.nodes()) {
        if (node.is_leaf()) {
          REQUIRE(std::isfinite(node.value));
          REQUIRE(node.value >= lo);
          REQUIRE(node.value <= hi);
        } else {
          REQUIRE(static_cast<std::size_t>(node.feature) < p);
        }
      }
    }
    for (int q = 0; q < 50; ++q) {
      std::vector<double> x(p);
      for (auto& v : x) v = 10.0 * rng.normal();
      const double pred = predict_forest(f, x);
      REQUIRE(pred >= lo);
      REQUIRE(pred <= hi);
    }
  }
}

TEST_CASE("forest fits are deterministic and seed-dependent; dump round-trips") {
  Rng rng(RngStream{4, 4});
  FeatureMatrix X(300, 4);
  std::vector<double> y(300);
  for (std::size_t i = 0; i < 300; ++i) {
    for (std::size_t j = 0; j < 4; ++j) X(i, j) = rng.normal();
    y[i] = X(i, 0) * X(i, 1) + rng.normal();
  }
  ForestParams p;
  p.n_trees = 20;
  p.seed = RngStream{9, 0};
  std::stringstream a, b, c;
  fit_regression_forest(X, y, p).dump(a);
  fit_regression_forest(X, y, p).dump(b);
  CHECK(a.str() == b.str());
  p.seed = RngStream{10, 0};
  const auto other = fit_regression_forest(X, y, p);
  other.dump(c);
  CHECK(a.str() != c.str());
  std::stringstream in(c.str());
  const auto loaded = RegressionForest::load(in);
  for (int q = 0; q < 50; ++q) {
    const std::vector<double> x = {rng.normal(), rng.normal(), rng.normal(), rng.normal()};
    REQUIRE(loaded.predict(x) == other.predict(x));
  }
}

TEST_CASE("fit errors") {
  CHECK_THROWS_AS(fit_regression_forest(FeatureMatrix(0, 2), std::vector<double>{}, ForestParams{}), std::invalid_argument);
  CHECK_THROWS_AS(fit_regression_forest(FeatureMatrix(3, 2), std::vector<double>{1, 2}, ForestParams{}), std::invalid_argument);
  const auto f = fit_regression_forest(matrix({{1.0, 2.0}}), std::vector<double>{1.0}, ForestParams{});
  CHECK_THROWS_AS(predict_forest(f, std::vector<double>{1.0}), std::invalid_argument);
}

TEST_CASE("outcome and propensity models on degenerate auxiliary data") {
  Trajectory aux = simulate_ade_dgp(AdeDgpConfig{}, 200, RngStream{5, 0});
  for (auto& o : aux.obs) o.y = 3.0;
  ForestParams p;
  p.n_trees = 10;
  const auto f = fit_outcome_model(aux, true, p);
  const std::vector<double> x(10, 0.3), h = {2.0};
  CHECK((*f)(1, x, h) == 3.0);
  CHECK((*f)(0, x, h) == 3.0);

  // Without the shared state the h argument is ignored.
  Trajectory aux2 = simulate_ade_dgp(AdeDgpConfig{}, 300, RngStream{6, 0});
  const auto f_no_h = fit_outcome_model(aux2, false, p);
  CHECK_FALSE(f_no_h->uses_shared_state());
  CHECK((*f_no_h)(1, x, std::vector<double>{-50.0}) == (*f_no_h)(1, x, std::vector<double>{50.0}));

  for (auto& o : aux.obs) o.d = 1;
  const auto m1 = fit_propensity_model(aux, 0.1, p);
  for (auto& o : aux.obs) o.d = 0;
  const auto m0 = fit_propensity_model(aux, 0.1, p);
  CHECK((*m1)(x) == 0.9);
  CHECK((*m0)(x) == 0.1);
}

TEST_CASE("propensity clipping holds everywhere, including outside the training hull") {
  const Trajectory aux = simulate_ade_dgp(AdeDgpConfig{}, 1000, RngStream{7, 0});
  ForestParams p;
  p.n_trees = 30;
  const auto m = fit_propensity_model(aux, 0.1, p);
  Rng rng(RngStream{7, 1});
  for (int i = 0; i < 2000; ++i) {
    std::vector<double> x(10);
    for (auto& v : x) v = 100.0 * rng.normal();
    const double v = (*m)(x);
    REQUIRE(v >= 0.1);
    REQUIRE(v <= 0.9);
  }
}

TEST_CASE("forest learns the zero-noise ADE outcome and the propensity") {
  AdeDgpConfig quiet;
  quiet.y_noise_sd = 0.0;
  const Trajectory aux = simulate_ade_dgp(quiet, 4000, RngStream{8, 0});
  ForestParams p;
  p.n_trees = 50;
  const auto f = fit_outcome_model(aux, true, p);
  double mse = 0.0;
  for (const auto& o : aux.obs) mse += std::pow((*f)(o.d, o.x, o.h) - o.y, 2);
  CHECK(mse / aux.T() < 0.05);

  const Trajectory sample = simulate_ade_dgp(AdeDgpConfig{}, 4000, RngStream{9, 0});
  const auto m = fit_propensity_model(sample, 0.1, p);
  const Trajectory held = simulate_ade_dgp(AdeDgpConfig{}, 2000, RngStream{10, 0});
  double err = 0.0;
  for (const auto& o : held.obs) err += std::abs((*m)(o.x) - propensity_true(o.x[0], 0.1));
  CHECK(err / held.T() < 0.1);
}

TEST_CASE("held-out outcome error shrinks with more auxiliary data") {
  const AdeDgpConfig cfg;
  ForestParams p;
  p.n_trees = 20;
  const Trajectory held = simulate_ade_dgp(cfg, 1000, RngStream{11, 0});
  auto mse_at = [&](std::size_t n, std::uint64_t seed) {
    const auto f = fit_outcome_model(simulate_ade_dgp(cfg, n, RngStream{12, seed}), true, p);
    double s = 0.0;
    for (const auto& o : held.obs) s += std::pow((*f)(o.d, o.x, o.h) - ade_outcome_mean(cfg, o.d, o.x, o.h), 2);
    return s / held.T();
  };
  double small = 0.0, large = 0.0;
  const int seeds = 20;
  for (int s = 0; s < seeds; ++s) {
    small += mse_at(500, static_cast<std::uint64_t>(s));
    large += mse_at(8000, static_cast<std::uint64_t>(s) + 1000);
  }
  CHECK(large <= small);
}

TEST_CASE("oracle nuisances evaluate the structural formulas") {
  const NuisanceSet ade = oracle_nuisances(AdeDgpConfig{});
  std::vector<double> x(10, 0.0);
  x[0] = 0.25;
  CHECK((*ade.f)(1, x, std::vector<double>{1.0}) == doctest::Approx(4.0).epsilon(1e-15));
  x[0] = 0.05;
  CHECK((*ade.m)(x) == 0.1);

  const NuisanceSet sb = oracle_nuisances(SwitchbackDgpConfig{});
  CHECK((*sb.f)(0, std::vector<double>{0.0}, std::vector<double>(10, 0.0)) == 1.0);
  CHECK((*sb.m)(std::vector<double>{0.3}) == 0.5);
}

}  // TEST_SUITE
