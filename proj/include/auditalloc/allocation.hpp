#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <utility>
#include <variant>
#include <vector>

#include "auditalloc/population.hpp"
#include "auditalloc/score_vector.hpp"

namespace auditalloc {

inline constexpr double kDefaultAuditRate = 0.00644;
inline constexpr double kDefaultDollarBudget = 125'000'000.0;

// Share of the weighted population audited.
struct RateBudget {
  double k = kDefaultAuditRate;
};

// Cap on total examination cost, sum of alpha * w * c.
struct DollarBudget {
  double dollars = kDefaultDollarBudget;
};

using BudgetSpec = std::variant<RateBudget, DollarBudget>;

struct Allocation {
  std::vector<std::int64_t> ids;
  std::vector<double> alpha;
  BudgetSpec budget = RateBudget{};
  // Weighted audit mass for a rate budget, dollars for a dollar budget.
  double spent = 0.0;

  std::size_t size() const noexcept { return alpha.size(); }
};

// Throws DimensionError on length or id mismatch, BudgetError for k outside
// (0, 1]. Ties in score are broken by ascending id.
Allocation topk_allocation(const ScoreVector& scores, const Population& pop, RateBudget budget);

// Top-k on the true misreport amounts.
Allocation oracle_allocation(const Population& pop, RateBudget budget);

// What must be nondecreasing in income for monotone_allocation. The two
// coincide when buckets carry equal weight; with unequal bucket weights only
// Rate guarantees a nondecreasing audit_rate_by_bucket.
enum class MonotoneBasis { Rate, Mass };

// Maximizes sum(alpha * w * max(score, 0)) subject to the rate budget and a
// nondecreasing per-bucket audit rate (or mass). Empty buckets are skipped.
// Among optimal solutions the one with the lexicographically largest
// (A_1, A_2, ...) is returned, i.e. audits are spread as evenly across
// buckets as the optimum allows. Throws BudgetError when k is outside (0, 1]
// or no monotone allocation can spend the budget.
Allocation monotone_allocation(const ScoreVector& scores, const Population& pop,
                               RateBudget budget, MonotoneBasis basis = MonotoneBasis::Rate);

// Fractional knapsack by score / cost, ties by ascending id. The budget is
// always spent in full unless every record is selected, so records with
// negative scores are reached once all others are exhausted.
Allocation roi_allocation(const ScoreVector& scores, const Population& pop, DollarBudget budget);

// sum(alpha * w * score) for an allocation aligned with `scores`.
double allocation_value(const Allocation& alloc, const ScoreVector& scores, const Population& pop);

// Mean audit cost per (bucket, activity group) cell.
class CostModel {
 public:
  CostModel() = default;
  explicit CostModel(std::map<std::pair<int, int>, double> table);

  double cost(int bucket, int group) const;
  bool contains(int bucket, int group) const { return table_.contains({bucket, group}); }
  const std::map<std::pair<int, int>, double>& table() const noexcept { return table_; }
  double max_cost() const;
  double min_cost() const;

 private:
  std::map<std::pair<int, int>, double> table_;
};

// Cell means of the decile cost vector times the group multipliers.
CostModel default_cost_model(const PopulationConfig& config);

// Weighted mean of observed costs per cell. Observations are winsorized at
// the given weighted quantiles before averaging; pass (0, 1) to skip.
CostModel build_cost_model(const Population& pop, std::span<const double> observed_costs,
                           double lower_q = 0.01, double upper_q = 0.99);

// Throws DataError naming the first record whose cell is missing.
std::vector<double> estimate_costs(const Population& pop, const CostModel& model);

// CSV `id,alpha` and `bucket,group,cost`.
void write_allocation(const Allocation& alloc, std::ostream& out);
Allocation read_allocation(std::istream& in);
void write_cost_model(const CostModel& model, std::ostream& out);
CostModel read_cost_model(std::istream& in);

}  // namespace auditalloc
