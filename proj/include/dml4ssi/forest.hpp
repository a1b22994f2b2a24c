#pragma once

#include <cstddef>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "dml4ssi/core.hpp"

namespace dml4ssi {

// Dense row-major matrix of training features.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  FeatureMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Any fitted x -> y predictor.
class Regressor {
 public:
  virtual ~Regressor() = default;
  virtual double predict(std::span<const double> x) const = 0;
  virtual std::size_t feature_count() const = 0;
};

// Black-box learner used for nuisance fitting.
class Learner {
 public:
  virtual ~Learner() = default;
  virtual std::shared_ptr<const Regressor> fit(const FeatureMatrix& features,
                                               std::span<const double> targets,
                                               const RngStream& stream) const = 0;
};

struct ForestParams {
  std::size_t n_trees = 200;
  std::optional<std::size_t> max_depth;  // unlimited when empty
  std::size_t min_samples_leaf = 5;
  double feature_fraction = 1.0;
  bool bootstrap = true;
  RngStream seed;

  void validate() const;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;  // rows with x[feature] <= threshold go left
  int left = -1;
  int right = -1;
  double value = 0.0;  // leaf mean

  bool is_leaf() const { return feature < 0; }
};

class RegressionTree {
 public:
  RegressionTree() = default;
  explicit RegressionTree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {}

  double predict(std::span<const double> x) const;
  const std::vector<TreeNode>& nodes() const { return nodes_; }

 private:
  std::vector<TreeNode> nodes_;
};

class RegressionForest final : public Regressor {
 public:
  RegressionForest(std::vector<RegressionTree> trees, std::size_t feature_count);

  double predict(std::span<const double> x) const override;
  std::size_t feature_count() const override { return feature_count_; }
  const std::vector<RegressionTree>& trees() const { return trees_; }

  // Debug dump, one line per node:
  //   <tree> <node> split <feature> <threshold> <left> <right>
  //   <tree> <node> leaf -1 <value>
  // preceded by a "forest <n_trees> <feature_count>" header.
  void dump(std::ostream& out) const;
  static RegressionForest load(std::istream& in);

 private:
  std::vector<RegressionTree> trees_;
  std::size_t feature_count_;
};

// CART regression forest: variance-reduction splits at midpoints between
// sorted distinct feature values; ties go to the lowest feature index, then
// the smallest threshold.
RegressionForest fit_regression_forest(const FeatureMatrix& features,
                                       std::span<const double> targets,
                                       const ForestParams& params);

double predict_forest(const RegressionForest& forest, std::span<const double> x);

class ForestLearner final : public Learner {
 public:
  explicit ForestLearner(ForestParams params) : params_(params) {}

  // The stream replaces params.seed.
  std::shared_ptr<const Regressor> fit(const FeatureMatrix& features,
                                       std::span<const double> targets,
                                       const RngStream& stream) const override;

  const ForestParams& params() const { return params_; }

 private:
  ForestParams params_;
};

}  // namespace dml4ssi
