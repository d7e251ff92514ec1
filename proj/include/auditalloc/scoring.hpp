#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "auditalloc/population.hpp"
#include "auditalloc/score_vector.hpp"

namespace auditalloc {

enum class ModelFamily { LinearDiscriminant, Logistic, RandomForest, GradientBoost };

std::string to_string(ModelFamily f);
ModelFamily parse_family(const std::string& name);

// Classification predicts P[misreport > tau]; Regression predicts misreport.
struct TargetKind {
  enum class Kind { Classification, Regression };
  Kind kind = Kind::Classification;
  double tau = kDefaultTau;

  static TargetKind classification(double tau = kDefaultTau) { return {Kind::Classification, tau}; }
  static TargetKind regression() { return {Kind::Regression, 0.0}; }
  bool is_classification() const noexcept { return kind == Kind::Classification; }
};

struct FitMode {
  enum class Kind { NativeWeights, Subsample };
  Kind kind = Kind::NativeWeights;
  std::int64_t n = 1'000'000;  // draws for Subsample

  static FitMode native() { return {Kind::NativeWeights, 0}; }
  static FitMode subsample(std::int64_t n) { return {Kind::Subsample, n}; }
};

// Family-specific hyperparameters by name. Unknown names and out-of-range
// values are rejected by validate(); missing names take family defaults.
//
//   LinearDiscriminant: ridge
//   Logistic:           l2, max_iter, tol
//   RandomForest:       n_trees, max_depth, min_leaf, mtry (0 = auto), soft_vote
//   GradientBoost:      n_rounds, max_depth, min_leaf, learning_rate, l2,
//                       bagging_fraction
struct ModelSpec {
  ModelFamily family = ModelFamily::GradientBoost;
  std::map<std::string, double> hyperparameters;
  std::uint64_t seed = 0;
  // LinearDiscriminant defaults to Subsample(1e6); everything else to
  // NativeWeights. Set explicitly to override.
  std::optional<FitMode> fit_mode;

  static std::map<std::string, double> defaults(ModelFamily f);
  void validate() const;
  double param(const std::string& name) const;  // value or family default
  FitMode effective_fit_mode() const;
};

void to_json(nlohmann::json& j, const ModelSpec& s);
void from_json(const nlohmann::json& j, ModelSpec& s);
void to_json(nlohmann::json& j, const TargetKind& t);
void from_json(const nlohmann::json& j, TargetKind& t);

// Row-major design matrix with labels and sample weights.
struct TrainingData {
  std::size_t n_features = 0;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> w;
  std::vector<int> bucket;

  std::size_t size() const noexcept { return y.size(); }
  std::span<const double> row(std::size_t i) const {
    return {x.data() + i * n_features, n_features};
  }
};

// Labels are 1[misreport > tau] or misreport. Throws DataError on
// non-finite features.
TrainingData make_training_data(const Population& pop, const TargetKind& target);

// A fitted predictor. Classification models return a probability.
class Model {
 public:
  virtual ~Model() = default;
  virtual double predict(std::span<const double> features, int bucket) const = 0;
  // Record-level entry point used by Scorer::score. Randomized models
  // override it to seed their draw from the record id.
  virtual double predict_record(const TaxpayerRecord& r) const {
    return predict(r.features, r.bucket);
  }
  virtual nlohmann::json to_json() const = 0;
};

// Deserializes any model written by Model::to_json.
std::shared_ptr<const Model> model_from_json(const nlohmann::json& j);

class Scorer {
 public:
  Scorer() = default;
  Scorer(std::string family, TargetKind target, std::size_t feature_count,
         std::shared_ptr<const Model> model);

  // Returns the same value for every record.
  static Scorer constant(double value, TargetKind target, std::size_t feature_count);

  const std::string& family() const noexcept { return family_; }
  const TargetKind& target() const noexcept { return target_; }
  std::size_t feature_count() const noexcept { return feature_count_; }
  const Model& model() const { return *model_; }
  std::shared_ptr<const Model> model_ptr() const { return model_; }

  // Throws DimensionError on feature-count mismatch.
  double score(const TaxpayerRecord& r) const;

  nlohmann::json to_json() const;
  static Scorer from_json(const nlohmann::json& j);

 private:
  std::string family_;
  TargetKind target_;
  std::size_t feature_count_ = 0;
  std::shared_ptr<const Model> model_;
};

// Throws DegenerateLabelError for a single-class classification set,
// DataError for non-finite features, ConfigError for an invalid spec or a
// family that does not support the target.
Scorer fit_scorer(const ModelSpec& spec, const Population& train, const TargetKind& target);

// Fits directly on prepared data (weights used as given). Used by the
// fairness reductions for cost-sensitive refits.
std::shared_ptr<const Model> fit_model(const ModelSpec& spec, const TrainingData& data,
                                       const TargetKind& target);

ScoreVector score(const Scorer& scorer, const Population& pop);

// Scores equal the true misreport amounts.
ScoreVector oracle_scorer(const Population& pop);

// Weighted mean loss (log loss or squared error) of `scorer` on `pop`.
double weighted_loss(const Scorer& scorer, const Population& pop);

// Mean held-out weighted loss over k folds.
double cross_validate(const ModelSpec& spec, const Population& pop, const TargetKind& target,
                      int folds, std::uint64_t seed);

// Returns the grid entry with the lowest cross-validated loss (first wins ties).
ModelSpec grid_search(const ModelSpec& base,
                      const std::vector<std::map<std::string, double>>& grid,
                      const Population& pop, const TargetKind& target, int folds,
                      std::uint64_t seed);

namespace detail {

// Weighted, W-normalized logistic loss with an L2 penalty on the
// coefficients (intercept excluded). beta = [intercept, coef...].
double logistic_objective(const TrainingData& d, std::span<const double> beta, double l2);
std::vector<double> logistic_gradient(const TrainingData& d, std::span<const double> beta,
                                      double l2);
// Coefficients of a fitted Logistic scorer, intercept first.
std::vector<double> logistic_coefficients(const Scorer& s);

// Per-example log loss on the raw margin f and its derivative in f, as
// used by gradient boosting.
double logloss(double f, double y);
double logloss_gradient(double f, double y);

// Per-round weighted training loss recorded while boosting.
std::vector<double> boosting_loss_path(const Scorer& s);

}  // namespace detail

}  // namespace auditalloc
