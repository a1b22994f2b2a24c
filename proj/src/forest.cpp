#include "dml4ssi/forest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace dml4ssi {
namespace {

// Training data shared by every tree of one forest: column-major features,
// per-feature row orders (by value, then row index) and centered targets.
struct PreparedData {
  std::size_t n = 0;
  std::size_t p = 0;
  std::vector<std::vector<double>> cols;
  std::vector<std::vector<std::uint32_t>> order;
  std::vector<double> y;  // targets minus offset
  std::vector<double> y_raw;
  double offset = 0.0;
};

PreparedData prepare(const FeatureMatrix& features, std::span<const double> targets) {
  if (features.rows() == 0) throw std::invalid_argument("cannot fit a forest on an empty training set");
  if (targets.size() != features.rows()) {
    throw std::invalid_argument("feature rows (" + std::to_string(features.rows()) +
                                ") != target count (" + std::to_string(targets.size()) + ")");
  }
  PreparedData data;
  data.n = features.rows();
  data.p = features.cols();
  data.cols.assign(data.p, std::vector<double>(data.n));
  for (std::size_t i = 0; i < data.n; ++i) {
    if (!std::isfinite(targets[i])) throw std::invalid_argument("non-finite training target");
    for (std::size_t j = 0; j < data.p; ++j) {
      const double v = features(i, j);
      if (!std::isfinite(v)) throw std::invalid_argument("non-finite training feature");
      data.cols[j][i] = v;
    }
  }
  data.y_raw.assign(targets.begin(), targets.end());
  data.offset = compensated_mean(targets);
  data.y.resize(data.n);
  for (std::size_t i = 0; i < data.n; ++i) data.y[i] = targets[i] - data.offset;

  data.order.resize(data.p);
  for (std::size_t j = 0; j < data.p; ++j) {
    auto& ord = data.order[j];
    ord.resize(data.n);
    std::iota(ord.begin(), ord.end(), 0u);
    const auto& col = data.cols[j];
    std::sort(ord.begin(), ord.end(), [&](std::uint32_t a, std::uint32_t b) {
      return col[a] < col[b] || (col[a] == col[b] && a < b);
    });
  }
  return data;
}

class TreeBuilder {
 public:
  TreeBuilder(const PreparedData& data, const ForestParams& params)
      : data_(data), params_(params), weight_(data.n, 0.0), goes_left_(data.n, 0) {}

  RegressionTree build(Rng& rng) {
    rng_ = &rng;
    draw_weights();
    fill_sorted();
    nodes_.clear();
    nodes_.push_back({});
    stack_.clear();
    stack_.push_back({0, active_, 0, 0});
    while (!stack_.empty()) {
      const Pending job = stack_.back();
      stack_.pop_back();
      grow(job);
    }
    return RegressionTree(std::move(nodes_));
  }

 private:
  struct Pending {
    std::size_t begin;
    std::size_t end;
    std::size_t depth;
    int node;
  };

  void draw_weights() {
    std::fill(weight_.begin(), weight_.end(), 0.0);
    if (params_.bootstrap) {
      for (std::size_t i = 0; i < data_.n; ++i) weight_[rng_->below(data_.n)] += 1.0;
    } else {
      std::fill(weight_.begin(), weight_.end(), 1.0);
    }
    active_ = 0;
    for (double w : weight_) active_ += w > 0.0 ? 1 : 0;
  }

  void fill_sorted() {
    sorted_.resize(std::max<std::size_t>(data_.p, 1) * active_);
    if (data_.p == 0) {
      // No features: keep one row list so node statistics can be computed.
      std::size_t k = 0;
      for (std::uint32_t i = 0; i < data_.n; ++i) {
        if (weight_[i] > 0.0) sorted_[k++] = i;
      }
      return;
    }
    for (std::size_t j = 0; j < data_.p; ++j) {
      std::uint32_t* dst = sorted_.data() + j * active_;
      for (std::uint32_t i : data_.order[j]) {
        if (weight_[i] > 0.0) *dst++ = i;
      }
    }
  }

  std::uint32_t* segment(std::size_t feature, std::size_t begin) {
    return sorted_.data() + feature * active_ + begin;
  }

  std::vector<std::size_t> candidate_features() {
    std::vector<std::size_t> features(data_.p);
    std::iota(features.begin(), features.end(), std::size_t{0});
    if (params_.feature_fraction >= 1.0 || data_.p <= 1) return features;
    const auto k = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(params_.feature_fraction * static_cast<double>(data_.p))));
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng_->below(data_.p - i));
      std::swap(features[i], features[j]);
    }
    features.resize(k);
    std::sort(features.begin(), features.end());
    return features;
  }

  void make_leaf(int node, double sum, double weight, double y_min, double y_max) {
    TreeNode& leaf = nodes_[static_cast<std::size_t>(node)];
    leaf.feature = -1;
    leaf.value = std::clamp(data_.offset + sum / weight, y_min, y_max);
  }

  void grow(const Pending& job) {
    const std::size_t len = job.end - job.begin;
    const std::uint32_t* rows = segment(0, job.begin);
    double W = 0.0, S = 0.0, SS = 0.0;
    double y_min = data_.y_raw[rows[0]], y_max = y_min;
    for (std::size_t k = 0; k < len; ++k) {
      const std::uint32_t r = rows[k];
      const double w = weight_[r];
      W += w;
      S += w * data_.y[r];
      SS += w * data_.y[r] * data_.y[r];
      y_min = std::min(y_min, data_.y_raw[r]);
      y_max = std::max(y_max, data_.y_raw[r]);
    }

    const auto min_leaf = static_cast<double>(params_.min_samples_leaf);
    const bool depth_exhausted = params_.max_depth && job.depth >= *params_.max_depth;
    if (depth_exhausted || W < 2.0 * min_leaf || y_min == y_max || data_.p == 0) {
      make_leaf(job.node, S, W, y_min, y_max);
      return;
    }

    const double parent_score = S * S / W;
    double best_score = -1.0;
    std::size_t best_feature = 0;
    double best_threshold = 0.0;
    bool found = false;

    for (std::size_t j : candidate_features()) {
      const std::uint32_t* seg = segment(j, job.begin);
      const double* col = data_.cols[j].data();
      double WL = 0.0, SL = 0.0;
      for (std::size_t k = 0; k + 1 < len; ++k) {
        const std::uint32_t r = seg[k];
        WL += weight_[r];
        SL += weight_[r] * data_.y[r];
        const double v = col[r];
        const double v_next = col[seg[k + 1]];
        if (v == v_next || WL < min_leaf) continue;
        const double WR = W - WL;
        if (WR < min_leaf) break;
        const double SR = S - SL;
        const double score = SL * SL / WL + SR * SR / WR;
        if (!found || score > best_score) {
          found = true;
          best_score = score;
          best_feature = j;
          double mid = 0.5 * (v + v_next);
          if (!(mid < v_next)) mid = v;
          best_threshold = mid;
        }
      }
    }

    if (!found || best_score - parent_score <= 1e-12 * SS) {
      make_leaf(job.node, S, W, y_min, y_max);
      return;
    }

    const double* split_col = data_.cols[best_feature].data();
    std::size_t n_left = 0;
    for (std::size_t k = 0; k < len; ++k) {
      const std::uint32_t r = rows[k];
      goes_left_[r] = split_col[r] <= best_threshold ? 1 : 0;
      n_left += goes_left_[r];
    }
    scratch_.resize(len);
    for (std::size_t j = 0; j < data_.p; ++j) {
      std::uint32_t* seg = segment(j, job.begin);
      std::size_t write = 0, spill = 0;
      for (std::size_t k = 0; k < len; ++k) {
        const std::uint32_t r = seg[k];
        if (goes_left_[r]) {
          seg[write++] = r;
        } else {
          scratch_[spill++] = r;
        }
      }
      std::copy(scratch_.begin(), scratch_.begin() + static_cast<std::ptrdiff_t>(spill), seg + write);
    }

    const int left = static_cast<int>(nodes_.size());
    const int right = left + 1;
    nodes_.push_back({});
    nodes_.push_back({});
    TreeNode& node = nodes_[static_cast<std::size_t>(job.node)];
    node.feature = static_cast<int>(best_feature);
    node.threshold = best_threshold;
    node.left = left;
    node.right = right;
    node.value = data_.offset + S / W;

    const std::size_t mid = job.begin + n_left;
    stack_.push_back({mid, job.end, job.depth + 1, right});
    stack_.push_back({job.begin, mid, job.depth + 1, left});
  }

  const PreparedData& data_;
  const ForestParams& params_;
  Rng* rng_ = nullptr;
  std::vector<double> weight_;
  std::vector<char> goes_left_;
  std::vector<std::uint32_t> sorted_;
  std::vector<std::uint32_t> scratch_;
  std::size_t active_ = 0;
  std::vector<TreeNode> nodes_;
  std::vector<Pending> stack_;
};

}  // namespace

void ForestParams::validate() const {
  if (n_trees == 0) throw std::invalid_argument("forest.n_trees must be positive");
  if (max_depth && *max_depth == 0) throw std::invalid_argument("forest.max_depth must be positive");
  if (min_samples_leaf == 0) throw std::invalid_argument("forest.min_samples_leaf must be positive");
  if (!(feature_fraction > 0.0 && feature_fraction <= 1.0)) {
    throw std::invalid_argument("forest.feature_fraction must lie in (0, 1]");
  }
}

double RegressionTree::predict(std::span<const double> x) const {
  std::size_t i = 0;
  while (!nodes_[i].is_leaf()) {
    const TreeNode& n = nodes_[i];
    i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
  }
  return nodes_[i].value;
}

RegressionForest::RegressionForest(std::vector<RegressionTree> trees, std::size_t feature_count)
    : trees_(std::move(trees)), feature_count_(feature_count) {
  if (trees_.empty()) throw std::invalid_argument("forest needs at least one tree");
}

double RegressionForest::predict(std::span<const double> x) const {
  if (x.size() != feature_count_) {
    throw std::invalid_argument("forest expects " + std::to_string(feature_count_) +
                                " features, got " + std::to_string(x.size()));
  }
  double sum = 0.0;
  double lo = trees_.front().predict(x);
  double hi = lo;
  for (const auto& tree : trees_) {
    const double v = tree.predict(x);
    sum += v;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  // The clamp only absorbs rounding; it keeps a constant forest exact.
  return std::clamp(sum / static_cast<double>(trees_.size()), lo, hi);
}

void RegressionForest::dump(std::ostream& out) const {
  out << "forest " << trees_.size() << ' ' << feature_count_ << '\n';
  for (std::size_t t = 0; t < trees_.size(); ++t) {
    const auto& nodes = trees_[t].nodes();
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const TreeNode& n = nodes[i];
      out << t << ' ' << i << ' ';
      if (n.is_leaf()) {
        out << "leaf -1 " << format_double(n.value) << '\n';
      } else {
        out << "split " << n.feature << ' ' << format_double(n.threshold) << ' ' << n.left << ' '
            << n.right << '\n';
      }
    }
  }
}

RegressionForest RegressionForest::load(std::istream& in) {
  std::string tag;
  std::size_t n_trees = 0, feature_count = 0;
  if (!(in >> tag >> n_trees >> feature_count) || tag != "forest" || n_trees == 0) {
    throw std::runtime_error("forest dump: bad header");
  }
  std::vector<std::vector<TreeNode>> nodes(n_trees);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::size_t t = 0, i = 0;
    std::string kind;
    TreeNode n;
    if (!(ls >> t >> i >> kind >> n.feature) || t >= n_trees) {
      throw std::runtime_error("forest dump: bad line '" + line + "'");
    }
    if (kind == "leaf") {
      n.feature = -1;
      ls >> n.value;
    } else if (kind == "split") {
      ls >> n.threshold >> n.left >> n.right;
    } else {
      throw std::runtime_error("forest dump: unknown node kind '" + kind + "'");
    }
    if (!ls) throw std::runtime_error("forest dump: bad line '" + line + "'");
    auto& tree = nodes[t];
    if (tree.size() <= i) tree.resize(i + 1);
    tree[i] = n;
  }
  std::vector<RegressionTree> trees;
  trees.reserve(n_trees);
  for (auto& tree : nodes) {
    if (tree.empty()) throw std::runtime_error("forest dump: tree without nodes");
    trees.emplace_back(std::move(tree));
  }
  return RegressionForest(std::move(trees), feature_count);
}

RegressionForest fit_regression_forest(const FeatureMatrix& features,
                                       std::span<const double> targets,
                                       const ForestParams& params) {
  params.validate();
  const PreparedData data = prepare(features, targets);
  std::vector<RegressionTree> trees;
  trees.reserve(params.n_trees);
  TreeBuilder builder(data, params);
  for (std::size_t t = 0; t < params.n_trees; ++t) {
    Rng rng(derive_stream(params.seed, t));
    trees.push_back(builder.build(rng));
  }
  return RegressionForest(std::move(trees), data.p);
}

double predict_forest(const RegressionForest& forest, std::span<const double> x) {
  return forest.predict(x);
}

std::shared_ptr<const Regressor> ForestLearner::fit(const FeatureMatrix& features,
                                                    std::span<const double> targets,
                                                    const RngStream& stream) const {
  ForestParams p = params_;
  p.seed = stream;
  return std::make_shared<RegressionForest>(fit_regression_forest(features, targets, p));
}

}  // namespace dml4ssi
