#pragma once

// Concrete model types. Private to the library.

#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "auditalloc/scoring.hpp"

namespace auditalloc::models {

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

class ConstantModel final : public Model {
 public:
  explicit ConstantModel(double v) : value_(v) {}
  double predict(std::span<const double>, int) const override { return value_; }
  nlohmann::json to_json() const override { return {{"kind", "constant"}, {"value", value_}}; }

 private:
  double value_;
};

// sigmoid(intercept + coef . x); shared by LDA and logistic regression.
class LinearModel final : public Model {
 public:
  LinearModel(std::string kind, double intercept, std::vector<double> coef)
      : kind_(std::move(kind)), intercept_(intercept), coef_(std::move(coef)) {}
  double margin(std::span<const double> x) const;
  double predict(std::span<const double> x, int) const override { return sigmoid(margin(x)); }
  nlohmann::json to_json() const override;
  static std::shared_ptr<const LinearModel> from_json(const nlohmann::json& j);

  double intercept() const { return intercept_; }
  const std::vector<double>& coef() const { return coef_; }

 private:
  std::string kind_;
  double intercept_;
  std::vector<double> coef_;
};

std::shared_ptr<const LinearModel> fit_lda(const TrainingData& d, double ridge);
double logistic_objective_impl(const TrainingData& d, std::span<const double> beta, double l2);
std::vector<double> logistic_gradient_impl(const TrainingData& d, std::span<const double> beta,
                                           double l2);
std::shared_ptr<const LinearModel> fit_logistic(const TrainingData& d, double l2, int max_iter,
                                                double tol);

// ---------------------------------------------------------------------------
// Trees

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;
};

class Tree {
 public:
  std::vector<TreeNode> nodes;
  double predict(std::span<const double> x) const;
};

struct TreeParams {
  int max_depth = 3;
  double min_leaf = 1;  // minimum sample count (sum of multiplicities) per child
  double l2 = 0.0;
  int mtry = 0;  // features tried per node; 0 = all
};

// Features pre-sorted once per data set and shared across trees.
struct SortedFeatures {
  std::vector<std::vector<std::uint32_t>> order;  // per feature, rows by value
  static SortedFeatures build(const TrainingData& d);
};

// Exact greedy Newton tree: leaf value -G/(H + l2), split gain
// G_L^2/(H_L+l2) + G_R^2/(H_R+l2) - G^2/(H+l2). Rows with count 0 are
// excluded. With g = -w y, h = w and l2 = 0 this is the weighted
// least-squares (variance-reduction) tree with weighted-mean leaves.
Tree build_tree(const TrainingData& d, const SortedFeatures& sorted, std::span<const double> g,
                std::span<const double> h, std::span<const double> count, const TreeParams& p,
                Rng& rng);

enum class EnsembleOutput { Vote, Mean, Logit, Identity };

class TreeEnsemble final : public Model {
 public:
  TreeEnsemble(EnsembleOutput out, double base, double rate, std::vector<Tree> trees,
               std::vector<double> loss_path = {})
      : out_(out), base_(base), rate_(rate), trees_(std::move(trees)),
        loss_path_(std::move(loss_path)) {}
  double raw(std::span<const double> x) const;
  double predict(std::span<const double> x, int) const override;
  nlohmann::json to_json() const override;
  static std::shared_ptr<const TreeEnsemble> from_json(const nlohmann::json& j);
  const std::vector<double>& loss_path() const { return loss_path_; }

 private:
  EnsembleOutput out_;
  double base_;
  double rate_;
  std::vector<Tree> trees_;
  std::vector<double> loss_path_;
};

struct ForestParams {
  int n_trees = 100;
  int max_depth = 8;
  double min_leaf = 5;
  int mtry = 0;
  bool soft_vote = false;
};
std::shared_ptr<const TreeEnsemble> fit_forest(const TrainingData& d, bool classification,
                                               const ForestParams& p, std::uint64_t seed);

struct BoostParams {
  int n_rounds = 100;
  int max_depth = 3;
  double min_leaf = 20;
  double learning_rate = 0.1;
  double l2 = 1.0;
  double bagging_fraction = 1.0;
};
std::shared_ptr<const TreeEnsemble> fit_boosting(const TrainingData& d, bool classification,
                                                 const BoostParams& p, std::uint64_t seed);

// Wrappers defined by the fairness module; nullptr for other kinds.
std::shared_ptr<const Model> fairness_model_from_json(const nlohmann::json& j);

}  // namespace auditalloc::models
