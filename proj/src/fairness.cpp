#include "auditalloc/fairness.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>

#include <nlohmann/json.hpp>

#include "auditalloc/csv.hpp"
#include "auditalloc/lp.hpp"
#include "models/models.hpp"

namespace auditalloc {

namespace {

constexpr std::uint64_t kReductionStream = 51;
constexpr std::uint64_t kDecisionStream = 52;

bool uses_tpr(ConstraintKind k) { return k != ConstraintKind::DemographicParity; }
bool uses_fpr(ConstraintKind k) { return k == ConstraintKind::EqualizedOdds; }
bool uses_selection(ConstraintKind k) { return k == ConstraintKind::DemographicParity; }

double spread(const std::vector<BucketRates>& rows, std::optional<double> BucketRates::*field) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& r : rows)
    if (const auto& v = r.*field) {
      lo = std::min(lo, *v);
      hi = std::max(hi, *v);
    }
  return hi >= lo ? hi - lo : 0.0;
}

void fill_gaps(DisparityReport& r) {
  r.selection_gap = spread(r.buckets, &BucketRates::selection_rate);
  r.tpr_gap = spread(r.buckets, &BucketRates::tpr);
  r.fpr_gap = spread(r.buckets, &BucketRates::fpr);
  r.selection_gap_w = spread(r.buckets, &BucketRates::selection_rate_w);
  r.tpr_gap_w = spread(r.buckets, &BucketRates::tpr_w);
  r.fpr_gap_w = spread(r.buckets, &BucketRates::fpr_w);
}

std::optional<double> ratio(const CompensatedSum& num, const CompensatedSum& den) {
  if (!(den.value() > 0)) return std::nullopt;
  return std::clamp(num.value() / den.value(), 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Randomized models

// Mixture of hard classifiers 1[p >= 0.5]; emits the probability that a
// member drawn by weight votes positive.
class ReductionModel final : public Model {
 public:
  ReductionModel(std::vector<std::shared_ptr<const Model>> members, std::vector<double> weights)
      : members_(std::move(members)), weights_(std::move(weights)) {
    if (members_.empty() || members_.size() != weights_.size())
      throw ConfigError("reduction mixture needs one weight per member");
  }

  double predict(std::span<const double> x, int bucket) const override {
    double p = 0.0;
    for (std::size_t k = 0; k < members_.size(); ++k)
      if (members_[k]->predict(x, bucket) >= 0.5) p += weights_[k];
    return std::clamp(p, 0.0, 1.0);
  }

  nlohmann::json to_json() const override {
    nlohmann::json m = nlohmann::json::array();
    for (const auto& p : members_) m.push_back(p->to_json());
    return {{"kind", "reduction_mixture"}, {"members", m}, {"weights", weights_}};
  }

  static std::shared_ptr<const ReductionModel> from_json(const nlohmann::json& j) {
    std::vector<std::shared_ptr<const Model>> members;
    for (const auto& m : j.at("members")) members.push_back(model_from_json(m));
    return std::make_shared<ReductionModel>(std::move(members),
                                            j.at("weights").get<std::vector<double>>());
  }

 private:
  std::vector<std::shared_ptr<const Model>> members_;
  std::vector<double> weights_;
};

class PostprocessModel final : public Model {
 public:
  PostprocessModel(Scorer base, std::vector<std::vector<ThresholdRule>> rules, std::uint64_t seed)
      : base_(std::move(base)), rules_(std::move(rules)), seed_(seed) {}

  double decision_probability(double s, int bucket) const {
    if (bucket < 1 || bucket > static_cast<int>(rules_.size()))
      throw DataError("record bucket " + std::to_string(bucket) +
                      " has no post-processing rule");
    double p = 0.0;
    for (const auto& r : rules_[bucket - 1])
      if (r.threshold && s >= *r.threshold) p += r.weight;
    return std::clamp(p, 0.0, 1.0);
  }

  // Expected score; the record-level path realizes the decision.
  double predict(std::span<const double> x, int bucket) const override {
    const double s = base_.model().predict(x, bucket);
    return s * decision_probability(s, bucket);
  }

  double predict_record(const TaxpayerRecord& r) const override {
    const double s = base_.score(r);
    return realized_decision(decision_probability(s, r.bucket), seed_, r.id) ? s : 0.0;
  }

  nlohmann::json to_json() const override {
    nlohmann::json rules = nlohmann::json::array();
    for (const auto& bucket : rules_) {
      nlohmann::json b = nlohmann::json::array();
      for (const auto& r : bucket)
        b.push_back({{"threshold", r.threshold ? nlohmann::json(*r.threshold) : nlohmann::json()},
                     {"weight", r.weight}});
      rules.push_back(b);
    }
    return {{"kind", "postprocess"}, {"base", base_.to_json()}, {"rules", rules}, {"seed", seed_}};
  }

  static std::shared_ptr<const PostprocessModel> from_json(const nlohmann::json& j) {
    std::vector<std::vector<ThresholdRule>> rules;
    for (const auto& jb : j.at("rules")) {
      std::vector<ThresholdRule> b;
      for (const auto& jr : jb) {
        ThresholdRule r;
        if (!jr.at("threshold").is_null()) r.threshold = jr.at("threshold").get<double>();
        r.weight = jr.at("weight").get<double>();
        b.push_back(r);
      }
      rules.push_back(std::move(b));
    }
    return std::make_shared<PostprocessModel>(Scorer::from_json(j.at("base")), std::move(rules),
                                              j.at("seed").get<std::uint64_t>());
  }

  const Scorer& base() const { return base_; }
  const std::vector<std::vector<ThresholdRule>>& rules() const { return rules_; }

 private:
  Scorer base_;
  std::vector<std::vector<ThresholdRule>> rules_;
  std::uint64_t seed_;
};

const PostprocessModel& as_postprocess(const Scorer& s) {
  const auto* m = s.model_ptr() ? dynamic_cast<const PostprocessModel*>(s.model_ptr().get()) : nullptr;
  if (!m) throw ConfigError("scorer is not post-processed");
  return *m;
}

// ---------------------------------------------------------------------------
// Reduction moments

// One moment per (event, bucket): gamma = E[h | event, bucket] - E[h | event],
// constrained to |gamma| <= epsilon. Events: everyone (DP), positives (TPR),
// negatives (FPR).
struct Moments {
  struct Cell {
    int event;  // 0 all, 1 positives, 2 negatives
    int bucket;
    double w_cell, w_event;
  };
  std::vector<Cell> cells;

  static bool in_event(int event, double y) {
    return event == 0 || (event == 1 && y > 0.5) || (event == 2 && y <= 0.5);
  }

  static Moments build(const TrainingData& d, int n_buckets, ConstraintKind kind) {
    std::vector<int> events;
    if (uses_selection(kind)) events.push_back(0);
    if (uses_tpr(kind)) events.push_back(1);
    if (uses_fpr(kind)) events.push_back(2);
    Moments m;
    for (int e : events) {
      std::vector<CompensatedSum> wb(n_buckets + 1);
      CompensatedSum we;
      for (std::size_t i = 0; i < d.size(); ++i)
        if (in_event(e, d.y[i])) {
          wb[d.bucket[i]].add(d.w[i]);
          we.add(d.w[i]);
        }
      for (int b = 1; b <= n_buckets; ++b)
        if (wb[b].value() > 0) m.cells.push_back({e, b, wb[b].value(), we.value()});
    }
    return m;
  }

  // gamma for decision probabilities h.
  std::vector<double> values(const TrainingData& d, std::span<const double> h) const {
    std::vector<double> out;
    out.reserve(cells.size());
    for (const auto& c : cells) {
      CompensatedSum cell, ev;
      for (std::size_t i = 0; i < d.size(); ++i) {
        if (!in_event(c.event, d.y[i])) continue;
        ev.add(d.w[i] * h[i]);
        if (d.bucket[i] == c.bucket) cell.add(d.w[i] * h[i]);
      }
      out.push_back(cell.value() / c.w_cell - ev.value() / c.w_event);
    }
    return out;
  }

  // d gamma_c / d h_i.
  double coefficient(std::size_t c, const TrainingData& d, std::size_t i) const {
    const auto& cell = cells[c];
    if (!in_event(cell.event, d.y[i])) return 0.0;
    double v = -d.w[i] / cell.w_event;
    if (d.bucket[i] == cell.bucket) v += d.w[i] / cell.w_cell;
    return v;
  }
};

double error_rate(const TrainingData& d, std::span<const double> h) {
  CompensatedSum e, W;
  for (std::size_t i = 0; i < d.size(); ++i) {
    e.add(d.w[i] * (d.y[i] > 0.5 ? 1.0 - h[i] : h[i]));
    W.add(d.w[i]);
  }
  return e.value() / W.value();
}

// Multipliers are laid out [plus_0, minus_0, plus_1, minus_1, ...] for the
// constraints gamma_c - eps <= 0 and -gamma_c - eps <= 0.
double lagrangian(double err, std::span<const double> gamma, std::span<const double> lambda,
                  double eps) {
  double L = err;
  for (std::size_t c = 0; c < gamma.size(); ++c)
    L += lambda[2 * c] * (gamma[c] - eps) + lambda[2 * c + 1] * (-gamma[c] - eps);
  return L;
}

}  // namespace

namespace models {
std::shared_ptr<const Model> fairness_model_from_json(const nlohmann::json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "reduction_mixture") return ReductionModel::from_json(j);
  if (kind == "postprocess") return PostprocessModel::from_json(j);
  return nullptr;
}
}  // namespace models

std::string to_string(ConstraintKind k) {
  switch (k) {
    case ConstraintKind::DemographicParity: return "DemographicParity";
    case ConstraintKind::EqualTPR: return "EqualTPR";
    case ConstraintKind::EqualizedOdds: return "EqualizedOdds";
  }
  return "?";
}

ConstraintKind parse_constraint(const std::string& name) {
  for (auto k : {ConstraintKind::DemographicParity, ConstraintKind::EqualTPR,
                 ConstraintKind::EqualizedOdds})
    if (name == to_string(k)) return k;
  throw ConfigError("unknown fairness constraint \"" + name + "\"");
}

void FairnessConstraint::validate() const {
  if (!std::isfinite(epsilon) || epsilon < 0)
    throw ConfigError("fairness epsilon must be finite and nonnegative");
}

double DisparityReport::gap(ConstraintKind kind, bool weighted) const {
  switch (kind) {
    case ConstraintKind::DemographicParity: return weighted ? selection_gap_w : selection_gap;
    case ConstraintKind::EqualTPR: return weighted ? tpr_gap_w : tpr_gap;
    case ConstraintKind::EqualizedOdds:
      return weighted ? std::max(tpr_gap_w, fpr_gap_w) : std::max(tpr_gap, fpr_gap);
  }
  return 0.0;
}

DisparityReport disparity_from_decisions(std::span<const double> a, const Population& pop,
                                         double tau) {
  pop.require_bucketed("constraint_disparity");
  if (a.size() != pop.size()) throw DimensionError("decision vector length differs from population");
  const int B = pop.n_buckets();
  struct Acc {
    CompensatedSum n, sel, pos, tp, neg, fp;
  };
  std::vector<Acc> u(B + 1), w(B + 1);
  for (std::size_t i = 0; i < pop.size(); ++i) {
    const auto& r = pop[i];
    const bool m = misreport_flag(r.misreport, tau);
    for (auto [acc, wt] : {std::pair{&u[r.bucket], 1.0}, std::pair{&w[r.bucket], r.weight}}) {
      acc->n.add(wt);
      acc->sel.add(wt * a[i]);
      if (m) {
        acc->pos.add(wt);
        acc->tp.add(wt * a[i]);
      } else {
        acc->neg.add(wt);
        acc->fp.add(wt * a[i]);
      }
    }
  }
  DisparityReport rep;
  for (int b = 1; b <= B; ++b)
    rep.buckets.push_back({b, ratio(u[b].sel, u[b].n), ratio(u[b].tp, u[b].pos),
                           ratio(u[b].fp, u[b].neg), ratio(w[b].sel, w[b].n),
                           ratio(w[b].tp, w[b].pos), ratio(w[b].fp, w[b].neg)});
  fill_gaps(rep);
  return rep;
}

DisparityReport constraint_disparity(const ScoreVector& scores, const Population& pop, double tau,
                                     double threshold) {
  scores.require_aligned(pop);
  std::vector<double> a(scores.size());
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = scores.scores[i] >= threshold ? 1.0 : 0.0;
  return disparity_from_decisions(a, pop, tau);
}

DisparityReport constraint_disparity(const Allocation& alloc, const Population& pop, double tau) {
  if (alloc.size() != pop.size()) throw DimensionError("allocation length differs from population");
  for (std::size_t i = 0; i < pop.size(); ++i)
    if (alloc.ids[i] != pop[i].id) throw DimensionError("allocation ids differ from population");
  return disparity_from_decisions(alloc.alpha, pop, tau);
}

void write_disparity(const DisparityReport& r, std::ostream& out) {
  out << "bucket,selection_rate,tpr,fpr,selection_rate_w,tpr_w,fpr_w\n";
  for (const auto& b : r.buckets)
    out << b.bucket << ',' << csv::format_optional(b.selection_rate) << ','
        << csv::format_optional(b.tpr) << ',' << csv::format_optional(b.fpr) << ','
        << csv::format_optional(b.selection_rate_w) << ',' << csv::format_optional(b.tpr_w) << ','
        << csv::format_optional(b.fpr_w) << '\n';
}

DisparityReport read_disparity(std::istream& in) {
  const auto t = csv::read_table(in);
  DisparityReport r;
  for (std::size_t row = 0; row < t.rows.size(); ++row)
    r.buckets.push_back({static_cast<int>(t.number(row, "bucket")),
                         t.optional_number(row, "selection_rate"), t.optional_number(row, "tpr"),
                         t.optional_number(row, "fpr"), t.optional_number(row, "selection_rate_w"),
                         t.optional_number(row, "tpr_w"), t.optional_number(row, "fpr_w")});
  fill_gaps(r);
  return r;
}

bool realized_decision(double probability, std::uint64_t seed, std::int64_t id) {
  const double u = hash_to_unit(derive_seed(derive_seed(seed, kDecisionStream),
                                            static_cast<std::uint64_t>(id)));
  return u < probability;
}

// ---------------------------------------------------------------------------

ReductionResult fit_reduction(const ModelSpec& base, const Population& train,
                              const FairnessConstraint& constraint, int max_iters,
                              std::uint64_t seed, const ReductionOptions& opt) {
  base.validate();
  constraint.validate();
  train.require_bucketed("fit_reduction");
  if (max_iters < 1) throw ConfigError("max_iters must be positive");
  if (!(opt.bound > 0) || !(opt.eta0 > 0) || !(opt.nu >= 0))
    throw ConfigError("reduction options out of range");
  const auto target = TargetKind::classification(opt.tau);
  const auto d = make_training_data(train, target);
  if (d.size() == 0) throw SizeError("training population is empty");
  {
    double w0 = 0, w1 = 0;
    for (std::size_t i = 0; i < d.size(); ++i) (d.y[i] > 0.5 ? w1 : w0) += d.w[i];
    if (!(w0 > 0) || !(w1 > 0))
      throw DegenerateLabelError("classification training set has a single label value");
  }
  const auto moments = Moments::build(d, train.n_buckets(), constraint.kind);
  const std::size_t C = moments.cells.size();
  const std::size_t J = 2 * C;
  const std::size_t n = d.size();
  const double eps = constraint.epsilon;
  const double B = opt.bound;
  double W = 0.0;
  for (double w : d.w) W += w;

  // Every hypothesis fitted so far, with its training decisions and moments.
  struct Hypothesis {
    std::shared_ptr<const Model> model;
    std::vector<double> h;
    double err;
    std::vector<double> gamma;
  };
  std::vector<Hypothesis> pool;
  auto admit = [&](std::shared_ptr<const Model> model) {
    Hypothesis hyp;
    hyp.model = std::move(model);
    hyp.h.resize(n);
    for (std::size_t i = 0; i < n; ++i)
      hyp.h[i] = hyp.model->predict(d.row(i), d.bucket[i]) >= 0.5 ? 1.0 : 0.0;
    hyp.err = error_rate(d, hyp.h);
    hyp.gamma = moments.values(d, hyp.h);
    pool.push_back(std::move(hyp));
    return pool.size() - 1;
  };
  // Rejecting everyone has zero violation under every constraint kind, so
  // with it in the pool the mixture LP is always feasible without slack.
  admit(std::make_shared<models::ConstantModel>(0.0));

  // Cost-sensitive best response to multipliers lambda: label 1[cost of a
  // positive decision < cost of a negative one], weight |difference|.
  auto best_response = [&](std::span<const double> lambda) -> std::size_t {
    std::vector<double> diff(n);
    for (std::size_t i = 0; i < n; ++i) diff[i] = d.w[i] * (1.0 - 2.0 * d.y[i]) / W;
    for (std::size_t c = 0; c < C; ++c) {
      const double l = lambda[2 * c] - lambda[2 * c + 1];
      if (l == 0.0) continue;
      for (std::size_t i = 0; i < n; ++i) diff[i] += l * moments.coefficient(c, d, i);
    }
    double max_abs = 0.0;
    for (double v : diff) max_abs = std::max(max_abs, std::abs(v));
    TrainingData cs;
    cs.n_features = d.n_features;
    double w0 = 0, w1 = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double wi = std::abs(diff[i]);
      if (!(wi > 1e-15 * max_abs)) continue;
      const auto row = d.row(i);
      cs.x.insert(cs.x.end(), row.begin(), row.end());
      cs.y.push_back(diff[i] < 0 ? 1.0 : 0.0);
      cs.w.push_back(wi);
      cs.bucket.push_back(d.bucket[i]);
      (diff[i] < 0 ? w1 : w0) += wi;
    }
    if (!(w0 > 0) || !(w1 > 0))
      return admit(std::make_shared<models::ConstantModel>(w1 > 0 ? 1.0 : 0.0));
    const double scale = static_cast<double>(cs.size()) / (w0 + w1);
    for (auto& v : cs.w) v *= scale;
    ModelSpec s = base;
    s.seed = derive_seed(derive_seed(seed, kReductionStream), pool.size());
    return admit(fit_model(s, cs, target));
  };

  // A candidate mixture over pool entries.
  struct Candidate {
    std::vector<std::pair<std::size_t, double>> weights;
    std::vector<double> lambda;
    double gap = std::numeric_limits<double>::infinity();
  };
  auto mix_value = [&](const Candidate& q, double& err, std::vector<double>& gamma) {
    err = 0.0;
    gamma.assign(C, 0.0);
    for (auto [k, wk] : q.weights) {
      err += wk * pool[k].err;
      for (std::size_t c = 0; c < C; ++c) gamma[c] += wk * pool[k].gamma[c];
    }
  };
  // Duality gap of (Q, lambda): distance of each player from its best
  // response. The lambda player's best response puts all of B on the most
  // violated constraint (or nothing when all hold).
  auto duality_gap = [&](Candidate& q) {
    double err;
    std::vector<double> gamma;
    mix_value(q, err, gamma);
    const double L = lagrangian(err, gamma, q.lambda, eps);
    double worst = 0.0;
    for (double g : gamma) worst = std::max(worst, std::abs(g) - eps);
    const double L_high = err + B * worst;
    const auto k = best_response(q.lambda);
    const double L_low = lagrangian(pool[k].err, pool[k].gamma, q.lambda, eps);
    q.gap = std::max({L_high - L, L - L_low, 0.0});
  };

  // Best mixture over the pool (primal LP) and its multipliers (dual LP):
  //   min sum_t q_t err_t + B s   s.t.  +-gamma(q) - s <= eps,  sum q = 1.
  // The LP optimum sits on the constraint boundary; a small margin keeps
  // rounding in the simplex from pushing the realized gap past 2 * eps.
  const double eps_lp = std::max(0.0, eps - 1e-8);
  auto lp_candidate = [&]() {
    Candidate out;
    const std::size_t T = pool.size();
    lp::Problem primal;
    for (std::size_t j = 0; j < J; ++j) primal.add_row(lp::Sense::LessEqual, eps_lp);
    const int simplex_row = primal.add_row(lp::Sense::Equal, 1.0);
    for (std::size_t t = 0; t < T; ++t) {
      std::vector<std::pair<int, double>> e{{simplex_row, 1.0}};
      for (std::size_t c = 0; c < C; ++c) {
        e.emplace_back(static_cast<int>(2 * c), pool[t].gamma[c]);
        e.emplace_back(static_cast<int>(2 * c + 1), -pool[t].gamma[c]);
      }
      primal.add_column(-pool[t].err, lp::kInfinity, std::move(e));
    }
    {
      std::vector<std::pair<int, double>> e;
      for (std::size_t j = 0; j < J; ++j) e.emplace_back(static_cast<int>(j), -1.0);
      primal.add_column(-B, lp::kInfinity, std::move(e));
    }
    const auto ps = lp::solve(primal);
    if (ps.status != lp::Status::Optimal) return out;
    double total = 0.0;
    for (std::size_t t = 0; t < T; ++t)
      if (ps.x[t] > 1e-12) {
        out.weights.emplace_back(t, ps.x[t]);
        total += ps.x[t];
      }
    for (auto& [k, wk] : out.weights) wk /= total;

    //   max mu - eps sum lambda  s.t.  mu - sum_j a_jt lambda_j <= err_t,
    //   sum lambda <= B, with mu = mu_plus - mu_minus.
    lp::Problem dual;
    for (std::size_t t = 0; t < T; ++t) dual.add_row(lp::Sense::LessEqual, pool[t].err);
    const int bound_row = dual.add_row(lp::Sense::LessEqual, B);
    std::vector<std::pair<int, double>> mu_plus, mu_minus;
    for (std::size_t t = 0; t < T; ++t) {
      mu_plus.emplace_back(static_cast<int>(t), 1.0);
      mu_minus.emplace_back(static_cast<int>(t), -1.0);
    }
    dual.add_column(1.0, lp::kInfinity, std::move(mu_plus));
    dual.add_column(-1.0, lp::kInfinity, std::move(mu_minus));
    for (std::size_t c = 0; c < C; ++c)
      for (double sign : {1.0, -1.0}) {
        std::vector<std::pair<int, double>> e{{bound_row, 1.0}};
        for (std::size_t t = 0; t < T; ++t)
          e.emplace_back(static_cast<int>(t), -sign * pool[t].gamma[c]);
        dual.add_column(-eps_lp, lp::kInfinity, std::move(e));
      }
    const auto ds = lp::solve(dual);
    if (ds.status != lp::Status::Optimal) {
      out.weights.clear();
      return out;
    }
    out.lambda.assign(ds.x.begin() + 2, ds.x.end());
    return out;
  };

  std::vector<double> theta(J, 0.0), lambda(J), lambda_sum(J, 0.0);
  std::vector<std::size_t> eg_members;
  const double eta = opt.eta0 / B;

  ReductionResult res;
  Candidate best;
  for (int t = 1; t <= max_iters; ++t) {
    // lambda = B * exp(theta) / (1 + sum exp(theta)), computed stably.
    double mx = 0.0;
    for (double v : theta) mx = std::max(mx, v);
    double den = std::exp(-mx);
    for (double v : theta) den += std::exp(v - mx);
    for (std::size_t j = 0; j < J; ++j) lambda[j] = B * std::exp(theta[j] - mx) / den;

    const auto k = best_response(lambda);
    eg_members.push_back(k);
    for (std::size_t j = 0; j < J; ++j) lambda_sum[j] += lambda[j];

    // Uniform average of the iterates with the averaged multipliers.
    Candidate eg;
    for (auto m : eg_members) eg.weights.emplace_back(m, 1.0 / t);
    eg.lambda.resize(J);
    for (std::size_t j = 0; j < J; ++j) eg.lambda[j] = lambda_sum[j] / t;
    duality_gap(eg);
    if (eg.gap < best.gap) best = eg;

    auto lpc = lp_candidate();
    if (!lpc.weights.empty()) {
      duality_gap(lpc);
      if (lpc.gap < best.gap) best = lpc;
    }

    res.iterations = t;
    if (best.gap <= opt.nu) {
      res.converged = true;
      break;
    }
    for (std::size_t c = 0; c < C; ++c) {
      theta[2 * c] += eta * (pool[k].gamma[c] - eps);
      theta[2 * c + 1] += eta * (-pool[k].gamma[c] - eps);
    }
  }

  // Merge repeated pool entries and keep the mixture in pool order.
  std::map<std::size_t, double> merged;
  for (auto [k, wk] : best.weights) merged[k] += wk;
  std::vector<std::shared_ptr<const Model>> members;
  std::vector<double> weights;
  for (auto [k, wk] : merged) {
    members.push_back(pool[k].model);
    weights.push_back(wk);
  }
  auto mixture = std::make_shared<ReductionModel>(std::move(members), std::move(weights));
  std::vector<double> q(n);
  for (std::size_t i = 0; i < n; ++i) q[i] = mixture->predict(d.row(i), d.bucket[i]);
  res.gap = best.gap;
  res.disparity = disparity_from_decisions(q, train, opt.tau).gap(constraint.kind, true);
  res.multipliers = best.lambda;
  res.scorer = Scorer(to_string(base.family) + "+reduction", target, d.n_features, mixture);
  return res;
}

// ---------------------------------------------------------------------------

Scorer postprocess_thresholds(const Scorer& scorer, const Population& train,
                              const FairnessConstraint& constraint, std::uint64_t seed,
                              double tau) {
  constraint.validate();
  train.require_bucketed("postprocess_thresholds");
  if (!scorer.target().is_classification())
    throw ConfigError("post-processing needs a classification scorer");
  const int NB = train.n_buckets();
  const auto kind = constraint.kind;
  const double eps = constraint.epsilon;

  std::vector<double> s(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) s[i] = scorer.score(train[i]);

  std::vector<std::vector<std::size_t>> members(NB + 1);
  for (std::size_t i = 0; i < train.size(); ++i) members[train[i].bucket].push_back(i);
  double W = 0.0;
  std::vector<double> wpos(NB + 1, 0.0), wneg(NB + 1, 0.0);
  for (int b = 1; b <= NB; ++b) {
    if (members[b].empty()) continue;
    for (auto i : members[b]) {
      const auto& r = train[i];
      (misreport_flag(r.misreport, tau) ? wpos[b] : wneg[b]) += r.weight;
      W += r.weight;
    }
    if (!(wpos[b] > 0)) throw DegenerateGroupError(b, "no positive labels");
    if (!(wneg[b] > 0)) throw DegenerateGroupError(b, "no negative labels");
  }

  std::vector<std::vector<ThresholdRule>> rules(NB);
  {
    std::vector<double> a(train.size());
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = s[i] >= 0.5 ? 1.0 : 0.0;
    if (disparity_from_decisions(a, train, tau).gap(kind, true) <= 2 * eps + 1e-12) {
      for (int b = 1; b <= NB; ++b) rules[b - 1] = {{0.5, 1.0}};
      return Scorer(scorer.family() + "+postprocess", scorer.target(), scorer.feature_count(),
                    std::make_shared<PostprocessModel>(scorer, std::move(rules), seed));
    }
  }

  // LP over mixtures of per-bucket threshold rules: maximize weighted
  // accuracy subject to every constrained rate lying within eps of a common
  // level.
  lp::Problem P;
  std::vector<int> convexity(NB + 1, -1);
  struct Quantity {
    bool on;
    std::vector<int> hi, lo;
    int level_col = -1;
  };
  Quantity qs[3] = {{uses_selection(kind), {}, {}}, {uses_tpr(kind), {}, {}}, {uses_fpr(kind), {}, {}}};
  for (int b = 1; b <= NB; ++b) {
    if (members[b].empty()) continue;
    convexity[b] = P.add_row(lp::Sense::Equal, 1.0);
  }
  for (auto& q : qs) {
    if (!q.on) continue;
    q.hi.assign(NB + 1, -1);
    q.lo.assign(NB + 1, -1);
    for (int b = 1; b <= NB; ++b) {
      if (members[b].empty()) continue;
      q.hi[b] = P.add_row(lp::Sense::LessEqual, eps);
      q.lo[b] = P.add_row(lp::Sense::GreaterEqual, -eps);
    }
  }
  for (auto& q : qs) {
    if (!q.on) continue;
    std::vector<std::pair<int, double>> e;
    for (int b = 1; b <= NB; ++b)
      if (q.hi[b] >= 0) {
        e.emplace_back(q.hi[b], -1.0);
        e.emplace_back(q.lo[b], -1.0);
      }
    q.level_col = P.add_column(0.0, 1.0, std::move(e));
  }

  struct Column {
    int bucket;
    std::optional<double> threshold;
  };
  std::vector<Column> cols;
  for (int b = 1; b <= NB; ++b) {
    if (members[b].empty()) continue;
    auto idx = members[b];
    std::sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) { return s[x] > s[y]; });
    double wb = wpos[b] + wneg[b], sel = 0, tp = 0, fp = 0;
    auto add = [&](std::optional<double> thr) {
      const double rate[3] = {sel / wb, tp / wpos[b], fp / wneg[b]};
      std::vector<std::pair<int, double>> e{{convexity[b], 1.0}};
      for (int k = 0; k < 3; ++k)
        if (qs[k].on) {
          e.emplace_back(qs[k].hi[b], rate[k]);
          e.emplace_back(qs[k].lo[b], rate[k]);
        }
      P.add_column((tp + (wneg[b] - fp)) / W, 1.0, std::move(e));
      cols.push_back({b, thr});
    };
    add(std::nullopt);
    for (std::size_t k = 0; k < idx.size();) {
      const double v = s[idx[k]];
      for (; k < idx.size() && s[idx[k]] == v; ++k) {
        const auto& r = train[idx[k]];
        sel += r.weight;
        (misreport_flag(r.misreport, tau) ? tp : fp) += r.weight;
      }
      add(v);
    }
  }

  const auto sol = lp::solve(P);
  if (sol.status != lp::Status::Optimal)
    throw Error("post-processing LP did not reach an optimum");
  const std::size_t first = P.columns.size() - cols.size();
  std::vector<double> total(NB + 1, 0.0);
  for (std::size_t c = 0; c < cols.size(); ++c) {
    const double x = sol.x[first + c];
    if (x > 1e-12) {
      rules[cols[c].bucket - 1].push_back({cols[c].threshold, x});
      total[cols[c].bucket] += x;
    }
  }
  for (int b = 1; b <= NB; ++b)
    for (auto& r : rules[b - 1]) r.weight /= total[b];
  return Scorer(scorer.family() + "+postprocess", scorer.target(), scorer.feature_count(),
                std::make_shared<PostprocessModel>(scorer, std::move(rules), seed));
}

const Scorer& postprocess_base(const Scorer& s) { return as_postprocess(s).base(); }

const std::vector<std::vector<ThresholdRule>>& postprocess_rules(const Scorer& s) {
  return as_postprocess(s).rules();
}

double decision_probability(const Scorer& s, const TaxpayerRecord& r) {
  const auto* m = s.model_ptr() ? s.model_ptr().get() : nullptr;
  if (const auto* pp = dynamic_cast<const PostprocessModel*>(m))
    return pp->decision_probability(pp->base().score(r), r.bucket);
  if (dynamic_cast<const ReductionModel*>(m)) return s.score(r);
  throw ConfigError("scorer has no randomized decision rule");
}

}  // namespace auditalloc
