#include "auditalloc/allocation.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>

#include "auditalloc/csv.hpp"
#include "auditalloc/lp.hpp"

namespace auditalloc {

namespace {

void check_rate(RateBudget b) {
  if (!(b.k > 0.0 && b.k <= 1.0)) throw BudgetError("rate budget k must lie in (0, 1]");
}

// Fills `mass` (in the units of `capacity`) down `order`; the record where
// the target is crossed gets the fractional share.
double fill(const std::vector<std::size_t>& order, std::span<const double> capacity, double mass,
            std::vector<double>& alpha) {
  CompensatedSum used;
  for (std::size_t idx : order) {
    const double remaining = mass - used.value();
    if (remaining <= 0.0) break;
    if (capacity[idx] <= remaining) {
      alpha[idx] = 1.0;
      used.add(capacity[idx]);
    } else {
      alpha[idx] = remaining / capacity[idx];
      used.add(remaining);
      break;
    }
  }
  return used.value();
}

std::vector<std::size_t> order_by(std::span<const double> key, const Population& pop) {
  std::vector<std::size_t> order(key.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (key[a] != key[b]) return key[a] > key[b];
    return pop[a].id < pop[b].id;
  });
  return order;
}

double weighted_mass(const Allocation& a, const Population& pop) {
  CompensatedSum s;
  for (std::size_t i = 0; i < a.size(); ++i) s.add(a.alpha[i] * pop[i].weight);
  return s.value();
}

}  // namespace

Allocation topk_allocation(const ScoreVector& scores, const Population& pop, RateBudget budget) {
  check_rate(budget);
  scores.require_aligned(pop);
  Allocation out;
  out.ids = pop.ids();
  out.alpha.assign(pop.size(), 0.0);
  out.budget = budget;
  const auto w = pop.weights();
  const auto order = order_by(scores.scores, pop);
  fill(order, w, budget.k * pop.total_weight(), out.alpha);
  out.spent = weighted_mass(out, pop);
  return out;
}

Allocation oracle_allocation(const Population& pop, RateBudget budget) {
  ScoreVector s{pop.ids(), pop.misreports()};
  return topk_allocation(s, pop, budget);
}

Allocation monotone_allocation(const ScoreVector& scores, const Population& pop,
                               RateBudget budget, MonotoneBasis basis) {
  check_rate(budget);
  scores.require_aligned(pop);
  pop.require_bucketed("monotone_allocation");
  const int n_buckets = pop.n_buckets();
  const std::size_t n = pop.size();
  const double target = budget.k * pop.total_weight();

  std::vector<CompensatedSum> bucket_weight_acc(n_buckets);
  for (const auto& r : pop.records()) bucket_weight_acc[r.bucket - 1].add(r.weight);
  std::vector<double> bucket_weight(n_buckets);
  std::vector<int> chain;  // nonempty buckets in income order
  for (int b = 0; b < n_buckets; ++b) {
    bucket_weight[b] = bucket_weight_acc[b].value();
    if (bucket_weight[b] > 0.0) chain.push_back(b);
  }

  if (basis == MonotoneBasis::Mass) {
    // A monotone mass vector can put at most min_{c >= b} W_c in bucket b.
    double capacity = 0.0, suffix_min = lp::kInfinity;
    for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
      suffix_min = std::min(suffix_min, bucket_weight[*it]);
      capacity += suffix_min;
    }
    if (target > capacity * (1.0 + 1e-12))
      throw BudgetError("monotone_allocation: budget exceeds the largest monotone audit mass");
  }

  // Columns are records with x_i = alpha_i w_i / target, so the budget row
  // reads sum x = 1. Objective coefficients are scores scaled to max 1.
  double smax = 0.0;
  for (double s : scores.scores) smax = std::max(smax, s);
  const double mean_bucket = pop.total_weight() / static_cast<double>(chain.size());
  std::vector<int> row_of_link(n_buckets, -1);

  lp::Problem prob;
  const int budget_row = prob.add_row(lp::Sense::Equal, 1.0);
  for (std::size_t c = 0; c + 1 < chain.size(); ++c)
    row_of_link[chain[c]] = prob.add_row(lp::Sense::LessEqual, 0.0);
  std::vector<int> prev_link(n_buckets, -1);
  for (std::size_t c = 1; c < chain.size(); ++c) prev_link[chain[c]] = row_of_link[chain[c - 1]];

  std::vector<double> objective(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = pop[i];
    const int b = r.bucket - 1;
    const double scale = basis == MonotoneBasis::Rate ? mean_bucket / bucket_weight[b] : 1.0;
    std::vector<std::pair<int, double>> col{{budget_row, 1.0}};
    if (row_of_link[b] >= 0) col.emplace_back(row_of_link[b], scale);
    if (prev_link[b] >= 0) col.emplace_back(prev_link[b], -scale);
    objective[i] = smax > 0.0 ? std::max(scores.scores[i], 0.0) / smax : 0.0;
    prob.add_column(objective[i], r.weight / target, std::move(col));
  }

  lp::Solution sol = lp::solve(prob);
  if (sol.status == lp::Status::Infeasible)
    throw BudgetError("monotone_allocation: no monotone allocation spends the budget");
  if (sol.status != lp::Status::Optimal) throw Error("monotone_allocation: LP solve failed");

  // Tie-break among optima: hold the objective, then raise bucket masses
  // from the lowest bucket up.
  {
    const double floor = sol.objective - 1e-10 * std::max(1.0, std::abs(sol.objective));
    const int obj_row = prob.add_row(lp::Sense::GreaterEqual, floor);
    for (std::size_t i = 0; i < n; ++i)
      if (objective[i] != 0.0) prob.columns[i].emplace_back(obj_row, objective[i]);
    for (std::size_t c = 0; c + 1 < chain.size(); ++c) {
      const int b = chain[c];
      for (std::size_t i = 0; i < n; ++i) prob.cost[i] = pop[i].bucket - 1 == b ? 1.0 : 0.0;
      lp::Solution stage = lp::solve(prob);
      if (stage.status != lp::Status::Optimal) break;
      sol.x = std::move(stage.x);
      const int hold = prob.add_row(lp::Sense::GreaterEqual, stage.objective - 1e-11);
      for (std::size_t i = 0; i < n; ++i)
        if (pop[i].bucket - 1 == b) prob.columns[i].emplace_back(hold, 1.0);
    }
  }

  std::vector<CompensatedSum> mass_acc(n_buckets);
  for (std::size_t i = 0; i < n; ++i) mass_acc[pop[i].bucket - 1].add(sol.x[i] * target);
  std::vector<double> mass(n_buckets);
  CompensatedSum total;
  for (int b = 0; b < n_buckets; ++b) {
    mass[b] = std::clamp(mass_acc[b].value(), 0.0, bucket_weight[b]);
    total.add(mass[b]);
  }
  if (total.value() > 0.0)
    for (int b = 0; b < n_buckets; ++b)
      mass[b] = std::min(mass[b] * (target / total.value()), bucket_weight[b]);

  // Within a bucket the optimum is greedy by score.
  Allocation out;
  out.ids = pop.ids();
  out.alpha.assign(n, 0.0);
  out.budget = budget;
  const auto w = pop.weights();
  std::vector<std::vector<std::size_t>> members(n_buckets);
  for (std::size_t i = 0; i < n; ++i) members[pop[i].bucket - 1].push_back(i);
  for (int b = 0; b < n_buckets; ++b) {
    auto& m = members[b];
    std::sort(m.begin(), m.end(), [&](std::size_t a, std::size_t c) {
      if (scores.scores[a] != scores.scores[c]) return scores.scores[a] > scores.scores[c];
      return pop[a].id < pop[c].id;
    });
    fill(m, w, mass[b], out.alpha);
  }
  out.spent = weighted_mass(out, pop);
  return out;
}

Allocation roi_allocation(const ScoreVector& scores, const Population& pop, DollarBudget budget) {
  if (!(budget.dollars > 0.0)) throw BudgetError("dollar budget must be positive");
  scores.require_aligned(pop);
  const std::size_t n = pop.size();
  std::vector<double> ratio(n), dollars(n);
  for (std::size_t i = 0; i < n; ++i) {
    ratio[i] = scores.scores[i] / pop[i].cost;
    dollars[i] = pop[i].weight * pop[i].cost;
  }
  Allocation out;
  out.ids = pop.ids();
  out.alpha.assign(n, 0.0);
  out.budget = budget;
  fill(order_by(ratio, pop), dollars, budget.dollars, out.alpha);
  CompensatedSum spent;
  for (std::size_t i = 0; i < n; ++i) spent.add(out.alpha[i] * dollars[i]);
  out.spent = spent.value();
  return out;
}

double allocation_value(const Allocation& alloc, const ScoreVector& scores,
                        const Population& pop) {
  scores.require_aligned(pop);
  if (alloc.size() != pop.size()) throw DimensionError("allocation_value: size mismatch");
  CompensatedSum s;
  for (std::size_t i = 0; i < pop.size(); ++i)
    s.add(alloc.alpha[i] * pop[i].weight * scores.scores[i]);
  return s.value();
}

// ---------------------------------------------------------------------------
// Costs

CostModel::CostModel(std::map<std::pair<int, int>, double> table) : table_(std::move(table)) {
  for (const auto& [cell, c] : table_)
    if (!(c > 0.0) || !std::isfinite(c))
      throw DataError("cost model cell (" + std::to_string(cell.first) + ", " +
                      std::to_string(cell.second) + ") must be positive");
}

double CostModel::cost(int bucket, int group) const {
  const auto it = table_.find({bucket, group});
  if (it == table_.end())
    throw DataError("cost model has no cell (bucket " + std::to_string(bucket) + ", group " +
                    std::to_string(group) + ")");
  return it->second;
}

double CostModel::max_cost() const {
  if (table_.empty()) throw DataError("empty cost model");
  double m = 0.0;
  for (const auto& [_, c] : table_) m = std::max(m, c);
  return m;
}

double CostModel::min_cost() const {
  if (table_.empty()) throw DataError("empty cost model");
  double m = lp::kInfinity;
  for (const auto& [_, c] : table_) m = std::min(m, c);
  return m;
}

CostModel default_cost_model(const PopulationConfig& config) {
  config.validate();
  std::map<std::pair<int, int>, double> t;
  const auto& mult = config.activity_group_cost_multipliers;
  for (int d = 0; d < kDeciles; ++d)
    for (std::size_t g = 0; g < mult.size(); ++g)
      t[{d + 1, static_cast<int>(g)}] = config.mean_cost[d] * mult[g];
  return CostModel(std::move(t));
}

CostModel build_cost_model(const Population& pop, std::span<const double> observed_costs,
                           double lower_q, double upper_q) {
  pop.require_bucketed("build_cost_model");
  if (observed_costs.size() != pop.size()) throw DimensionError("build_cost_model: size mismatch");
  const auto w = pop.weights();
  const auto clipped = winsorize(observed_costs, w, lower_q, upper_q);
  std::map<std::pair<int, int>, std::pair<CompensatedSum, CompensatedSum>> acc;
  for (std::size_t i = 0; i < pop.size(); ++i) {
    auto& [num, den] = acc[{pop[i].bucket, pop[i].activity_group}];
    num.add(w[i] * clipped[i]);
    den.add(w[i]);
  }
  std::map<std::pair<int, int>, double> t;
  for (const auto& [cell, nd] : acc) t[cell] = nd.first.value() / nd.second.value();
  return CostModel(std::move(t));
}

std::vector<double> estimate_costs(const Population& pop, const CostModel& model) {
  pop.require_bucketed("estimate_costs");
  std::vector<double> out;
  out.reserve(pop.size());
  for (const auto& r : pop.records()) {
    if (!model.contains(r.bucket, r.activity_group))
      throw DataError("record " + std::to_string(r.id) + ": cost model has no cell (bucket " +
                      std::to_string(r.bucket) + ", group " + std::to_string(r.activity_group) +
                      ")");
    out.push_back(model.cost(r.bucket, r.activity_group));
  }
  return out;
}

void write_allocation(const Allocation& alloc, std::ostream& out) {
  out << "id,alpha\n";
  for (std::size_t i = 0; i < alloc.size(); ++i)
    out << alloc.ids[i] << ',' << csv::format_double(alloc.alpha[i]) << '\n';
}

Allocation read_allocation(std::istream& in) {
  const auto t = csv::read_table(in);
  Allocation a;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    a.ids.push_back(static_cast<std::int64_t>(t.number(r, "id")));
    const double alpha = t.number(r, "alpha");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ParseError(r + 1, "alpha", "alpha outside [0, 1]");
    a.alpha.push_back(alpha);
  }
  return a;
}

void write_cost_model(const CostModel& model, std::ostream& out) {
  out << "bucket,group,cost\n";
  for (const auto& [cell, c] : model.table())
    out << cell.first << ',' << cell.second << ',' << csv::format_double(c) << '\n';
}

CostModel read_cost_model(std::istream& in) {
  const auto t = csv::read_table(in);
  std::map<std::pair<int, int>, double> table;
  for (std::size_t r = 0; r < t.rows.size(); ++r)
    table[{static_cast<int>(t.number(r, "bucket")), static_cast<int>(t.number(r, "group"))}] =
        t.number(r, "cost");
  return CostModel(std::move(table));
}

}  // namespace auditalloc
