#include "auditalloc/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "models/models.hpp"

namespace auditalloc {

namespace {

constexpr const char* kScorerFormat = "auditalloc.scorer";
constexpr int kScorerVersion = 1;

// Seed streams below spec.seed.
constexpr std::uint64_t kSubsampleStream = 41;
constexpr std::uint64_t kModelStream = 42;
constexpr std::uint64_t kFoldStream = 43;

struct ParamRule {
  double lo, hi;
  bool integral;
};

std::map<std::string, ParamRule> rules(ModelFamily f) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  switch (f) {
    case ModelFamily::LinearDiscriminant:
      return {{"ridge", {0, inf, false}}};
    case ModelFamily::Logistic:
      return {{"l2", {0, inf, false}}, {"max_iter", {1, 1e6, true}}, {"tol", {0, 1, false}}};
    case ModelFamily::RandomForest:
      return {{"n_trees", {1, 1e5, true}},
              {"max_depth", {1, 64, true}},
              {"min_leaf", {1, inf, false}},
              {"mtry", {0, 1e6, true}},
              {"soft_vote", {0, 1, true}}};
    case ModelFamily::GradientBoost:
      return {{"n_rounds", {1, 1e5, true}},
              {"max_depth", {1, 64, true}},
              {"min_leaf", {1, inf, false}},
              {"learning_rate", {1e-12, 1, false}},
              {"l2", {0, inf, false}},
              {"bagging_fraction", {1e-12, 1, false}}};
  }
  return {};
}

double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

void require_two_classes(const TrainingData& d) {
  double w0 = 0, w1 = 0;
  for (std::size_t i = 0; i < d.size(); ++i) (d.y[i] > 0.5 ? w1 : w0) += d.w[i];
  if (!(w0 > 0) || !(w1 > 0))
    throw DegenerateLabelError("classification training set has a single label value");
}

Population subset(const Population& pop, std::span<const std::size_t> idx) {
  std::vector<TaxpayerRecord> recs;
  recs.reserve(idx.size());
  for (auto i : idx) recs.push_back(pop[i]);
  return Population(std::move(recs), pop.n_buckets());
}

}  // namespace

std::string to_string(ModelFamily f) {
  switch (f) {
    case ModelFamily::LinearDiscriminant: return "LinearDiscriminant";
    case ModelFamily::Logistic: return "Logistic";
    case ModelFamily::RandomForest: return "RandomForest";
    case ModelFamily::GradientBoost: return "GradientBoost";
  }
  return "?";
}

ModelFamily parse_family(const std::string& name) {
  for (auto f : {ModelFamily::LinearDiscriminant, ModelFamily::Logistic, ModelFamily::RandomForest,
                 ModelFamily::GradientBoost})
    if (name == to_string(f)) return f;
  throw ConfigError("unknown model family \"" + name + "\"");
}

std::map<std::string, double> ModelSpec::defaults(ModelFamily f) {
  switch (f) {
    case ModelFamily::LinearDiscriminant:
      return {{"ridge", 1e-6}};
    case ModelFamily::Logistic:
      return {{"l2", 1e-4}, {"max_iter", 100}, {"tol", 1e-10}};
    case ModelFamily::RandomForest:
      return {{"n_trees", 100}, {"max_depth", 8}, {"min_leaf", 5}, {"mtry", 0}, {"soft_vote", 0}};
    case ModelFamily::GradientBoost:
      return {{"n_rounds", 100},  {"max_depth", 3}, {"min_leaf", 20},
              {"learning_rate", 0.1}, {"l2", 1.0}, {"bagging_fraction", 1.0}};
  }
  return {};
}

void ModelSpec::validate() const {
  const auto r = rules(family);
  for (const auto& [name, value] : hyperparameters) {
    const auto it = r.find(name);
    if (it == r.end())
      throw ConfigError("hyperparameter \"" + name + "\" is not defined for " + to_string(family));
    const auto& rule = it->second;
    if (!std::isfinite(value) || value < rule.lo || value > rule.hi ||
        (rule.integral && value != std::floor(value)))
      throw ConfigError("hyperparameter \"" + name + "\" out of range for " + to_string(family));
  }
  if (fit_mode && fit_mode->kind == FitMode::Kind::Subsample && fit_mode->n < 1)
    throw ConfigError("subsample size must be positive");
}

double ModelSpec::param(const std::string& name) const {
  if (auto it = hyperparameters.find(name); it != hyperparameters.end()) return it->second;
  const auto d = defaults(family);
  if (auto it = d.find(name); it != d.end()) return it->second;
  throw ConfigError("hyperparameter \"" + name + "\" is not defined for " + to_string(family));
}

FitMode ModelSpec::effective_fit_mode() const {
  if (fit_mode) return *fit_mode;
  return family == ModelFamily::LinearDiscriminant ? FitMode::subsample(1'000'000)
                                                   : FitMode::native();
}

void to_json(nlohmann::json& j, const ModelSpec& s) {
  j = {{"family", to_string(s.family)}, {"hyperparameters", s.hyperparameters}, {"seed", s.seed}};
  if (s.fit_mode) {
    if (s.fit_mode->kind == FitMode::Kind::Subsample)
      j["fit_mode"] = {{"kind", "subsample"}, {"n", s.fit_mode->n}};
    else
      j["fit_mode"] = {{"kind", "native"}};
  }
}

void from_json(const nlohmann::json& j, ModelSpec& s) {
  if (!j.is_object()) throw ConfigError("model spec must be an object");
  for (const auto& [key, _] : j.items())
    if (key != "family" && key != "hyperparameters" && key != "seed" && key != "fit_mode")
      throw ConfigError("unknown model spec key \"" + key + "\"");
  s = ModelSpec{};
  s.family = parse_family(j.at("family").get<std::string>());
  if (j.contains("hyperparameters"))
    s.hyperparameters = j.at("hyperparameters").get<std::map<std::string, double>>();
  s.seed = j.value("seed", std::uint64_t{0});
  if (j.contains("fit_mode")) {
    const auto& m = j.at("fit_mode");
    const auto kind = m.at("kind").get<std::string>();
    if (kind == "native") s.fit_mode = FitMode::native();
    else if (kind == "subsample") s.fit_mode = FitMode::subsample(m.at("n").get<std::int64_t>());
    else throw ConfigError("unknown fit_mode \"" + kind + "\"");
  }
  s.validate();
}

void to_json(nlohmann::json& j, const TargetKind& t) {
  if (t.is_classification())
    j = {{"kind", "classification"}, {"tau", t.tau}};
  else
    j = {{"kind", "regression"}};
}

void from_json(const nlohmann::json& j, TargetKind& t) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "classification") {
    t = TargetKind::classification(j.value("tau", kDefaultTau));
    if (!std::isfinite(t.tau)) throw ConfigError("tau must be finite");
  } else if (kind == "regression") {
    t = TargetKind::regression();
  } else {
    throw ConfigError("unknown target kind \"" + kind + "\"");
  }
}

TrainingData make_training_data(const Population& pop, const TargetKind& target) {
  TrainingData d;
  d.n_features = pop.feature_count();
  d.x.reserve(pop.size() * d.n_features);
  for (const auto& r : pop.records()) {
    for (double v : r.features) {
      if (!std::isfinite(v))
        throw DataError("non-finite feature on record " + std::to_string(r.id));
      d.x.push_back(v);
    }
    d.y.push_back(target.is_classification() ? (misreport_flag(r.misreport, target.tau) ? 1.0 : 0.0)
                                             : r.misreport);
    d.w.push_back(r.weight);
    d.bucket.push_back(r.bucket);
  }
  return d;
}

std::shared_ptr<const Model> model_from_json(const nlohmann::json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "constant") return std::make_shared<models::ConstantModel>(j.at("value").get<double>());
  if (kind == "lda" || kind == "logistic") return models::LinearModel::from_json(j);
  if (kind == "tree_ensemble") return models::TreeEnsemble::from_json(j);
  if (auto m = models::fairness_model_from_json(j)) return m;
  throw ConfigError("unknown model kind \"" + kind + "\"");
}

Scorer::Scorer(std::string family, TargetKind target, std::size_t feature_count,
               std::shared_ptr<const Model> model)
    : family_(std::move(family)), target_(target), feature_count_(feature_count),
      model_(std::move(model)) {}

Scorer Scorer::constant(double value, TargetKind target, std::size_t feature_count) {
  if (!std::isfinite(value)) throw DataError("constant score must be finite");
  if (target.is_classification() && (value < 0 || value > 1))
    throw DataError("classification score must lie in [0,1]");
  return Scorer("constant", target, feature_count, std::make_shared<models::ConstantModel>(value));
}

double Scorer::score(const TaxpayerRecord& r) const {
  if (r.features.size() != feature_count_)
    throw DimensionError("record " + std::to_string(r.id) + " has " +
                         std::to_string(r.features.size()) + " features; scorer expects " +
                         std::to_string(feature_count_));
  const double s = model_->predict_record(r);
  if (!std::isfinite(s)) throw DataError("non-finite score for record " + std::to_string(r.id));
  return s;
}

nlohmann::json Scorer::to_json() const {
  nlohmann::json t;
  auditalloc::to_json(t, target_);
  return {{"format", kScorerFormat},   {"version", kScorerVersion},
          {"family", family_},         {"target", t},
          {"feature_count", feature_count_}, {"model", model_->to_json()}};
}

Scorer Scorer::from_json(const nlohmann::json& j) {
  if (j.value("format", std::string{}) != kScorerFormat)
    throw ConfigError("not a scorer document");
  if (j.at("version").get<int>() != kScorerVersion)
    throw ConfigError("unsupported scorer version " + j.at("version").dump());
  TargetKind t;
  auditalloc::from_json(j.at("target"), t);
  return Scorer(j.at("family").get<std::string>(), t, j.at("feature_count").get<std::size_t>(),
                model_from_json(j.at("model")));
}

std::shared_ptr<const Model> fit_model(const ModelSpec& spec, const TrainingData& data,
                                       const TargetKind& target) {
  spec.validate();
  if (data.size() == 0) throw SizeError("training set is empty");
  const bool cls = target.is_classification();
  if (cls) require_two_classes(data);
  const auto seed = derive_seed(spec.seed, kModelStream);
  auto as_int = [&](const char* name) { return static_cast<int>(spec.param(name)); };
  switch (spec.family) {
    case ModelFamily::LinearDiscriminant:
      if (!cls) throw ConfigError("LinearDiscriminant supports classification targets only");
      return models::fit_lda(data, spec.param("ridge"));
    case ModelFamily::Logistic:
      if (!cls) throw ConfigError("Logistic supports classification targets only");
      return models::fit_logistic(data, spec.param("l2"), as_int("max_iter"), spec.param("tol"));
    case ModelFamily::RandomForest: {
      models::ForestParams p;
      p.n_trees = as_int("n_trees");
      p.max_depth = as_int("max_depth");
      p.min_leaf = spec.param("min_leaf");
      p.mtry = as_int("mtry");
      p.soft_vote = spec.param("soft_vote") != 0;
      return models::fit_forest(data, cls, p, seed);
    }
    case ModelFamily::GradientBoost: {
      models::BoostParams p;
      p.n_rounds = as_int("n_rounds");
      p.max_depth = as_int("max_depth");
      p.min_leaf = spec.param("min_leaf");
      p.learning_rate = spec.param("learning_rate");
      p.l2 = spec.param("l2");
      p.bagging_fraction = spec.param("bagging_fraction");
      return models::fit_boosting(data, cls, p, seed);
    }
  }
  throw ConfigError("unknown model family");
}

Scorer fit_scorer(const ModelSpec& spec, const Population& train, const TargetKind& target) {
  spec.validate();
  if (train.empty()) throw SizeError("training population is empty");
  const auto mode = spec.effective_fit_mode();
  TrainingData data;
  if (mode.kind == FitMode::Kind::Subsample) {
    // Labels are checked on the full set so a rare class missed by the draw
    // is not misreported as degenerate input.
    if (target.is_classification()) require_two_classes(make_training_data(train, target));
    const auto sub = weighted_subsample(train, mode.n, derive_seed(spec.seed, kSubsampleStream));
    data = make_training_data(sub.population, target);
  } else {
    data = make_training_data(train, target);
  }
  return Scorer(to_string(spec.family), target, train.feature_count(),
                fit_model(spec, data, target));
}

ScoreVector score(const Scorer& scorer, const Population& pop) {
  ScoreVector v;
  v.ids.reserve(pop.size());
  v.scores.reserve(pop.size());
  for (const auto& r : pop.records()) {
    v.ids.push_back(r.id);
    v.scores.push_back(scorer.score(r));
  }
  return v;
}

ScoreVector oracle_scorer(const Population& pop) { return {pop.ids(), pop.misreports()}; }

double weighted_loss(const Scorer& scorer, const Population& pop) {
  if (pop.empty()) throw SizeError("population is empty");
  const auto& t = scorer.target();
  CompensatedSum loss, W;
  for (const auto& r : pop.records()) {
    const double s = scorer.score(r);
    double l;
    if (t.is_classification()) {
      const double y = misreport_flag(r.misreport, t.tau) ? 1.0 : 0.0;
      const double q = std::clamp(s, 1e-15, 1 - 1e-15);
      l = -(y * std::log(q) + (1 - y) * std::log1p(-q));
    } else {
      l = (s - r.misreport) * (s - r.misreport);
    }
    loss.add(r.weight * l);
    W.add(r.weight);
  }
  return loss.value() / W.value();
}

double cross_validate(const ModelSpec& spec, const Population& pop, const TargetKind& target,
                      int folds, std::uint64_t seed) {
  if (folds < 2) throw ConfigError("cross-validation needs at least 2 folds");
  if (pop.size() < static_cast<std::size_t>(folds)) throw SizeError("fewer records than folds");
  std::vector<std::size_t> perm(pop.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(derive_seed(seed, kFoldStream));
  rng.shuffle(perm);
  double total = 0.0;
  for (int k = 0; k < folds; ++k) {
    std::vector<std::size_t> tr, te;
    for (std::size_t p = 0; p < perm.size(); ++p)
      (static_cast<int>(p % static_cast<std::size_t>(folds)) == k ? te : tr).push_back(perm[p]);
    std::sort(tr.begin(), tr.end());
    std::sort(te.begin(), te.end());
    const auto scorer = fit_scorer(spec, subset(pop, tr), target);
    total += weighted_loss(scorer, subset(pop, te));
  }
  return total / folds;
}

ModelSpec grid_search(const ModelSpec& base,
                      const std::vector<std::map<std::string, double>>& grid,
                      const Population& pop, const TargetKind& target, int folds,
                      std::uint64_t seed) {
  if (grid.empty()) throw ConfigError("grid is empty");
  ModelSpec best;
  double best_loss = std::numeric_limits<double>::infinity();
  for (const auto& point : grid) {
    ModelSpec s = base;
    for (const auto& [k, v] : point) s.hyperparameters[k] = v;
    const double l = cross_validate(s, pop, target, folds, seed);
    if (l < best_loss) {
      best_loss = l;
      best = s;
    }
  }
  return best;
}

namespace detail {

double logistic_objective(const TrainingData& d, std::span<const double> beta, double l2) {
  if (beta.size() != d.n_features + 1) throw DimensionError("beta length must be n_features + 1");
  return models::logistic_objective_impl(d, beta, l2);
}

std::vector<double> logistic_gradient(const TrainingData& d, std::span<const double> beta,
                                      double l2) {
  if (beta.size() != d.n_features + 1) throw DimensionError("beta length must be n_features + 1");
  return models::logistic_gradient_impl(d, beta, l2);
}

std::vector<double> logistic_coefficients(const Scorer& s) {
  const auto* m = dynamic_cast<const models::LinearModel*>(&s.model());
  if (!m || s.family() != to_string(ModelFamily::Logistic))
    throw ConfigError("scorer is not a logistic regression");
  std::vector<double> out{m->intercept()};
  out.insert(out.end(), m->coef().begin(), m->coef().end());
  return out;
}

double logloss(double f, double y) { return softplus(f) - y * f; }

double logloss_gradient(double f, double y) { return models::sigmoid(f) - y; }

std::vector<double> boosting_loss_path(const Scorer& s) {
  const auto* m = dynamic_cast<const models::TreeEnsemble*>(&s.model());
  if (!m || s.family() != to_string(ModelFamily::GradientBoost))
    throw ConfigError("scorer is not a gradient-boosted ensemble");
  return m->loss_path();
}

}  // namespace detail

}  // namespace auditalloc
