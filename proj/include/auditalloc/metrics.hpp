#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "auditalloc/allocation.hpp"
#include "auditalloc/population.hpp"

namespace auditalloc {

// sum(alpha * w * misreport)
double revenue(const Allocation& alloc, const Population& pop);

// Weighted share of audit mass landing on records with misreport <= tau.
// nullopt when nothing is audited.
std::optional<double> no_change_rate(const Allocation& alloc, const Population& pop, double tau);

// sum(alpha * w * cost)
double total_cost(const Allocation& alloc, const Population& pop);
double net_revenue(const Allocation& alloc, const Population& pop);

// sum(min(alpha, alpha_oracle) * w) / (k * W). Both allocations must carry
// RateBudget{k}; anything else throws BudgetError.
double oracle_overlap(const Allocation& alloc, const Allocation& oracle, const Population& pop,
                      double k);

// Weighted audit rate per bucket; nullopt for an empty bucket.
std::vector<std::optional<double>> audit_rate_by_bucket(const Allocation& alloc,
                                                        const Population& pop);

bool check_monotone(std::span<const double> rates, double tol);
// Undefined entries are skipped; neighbours across a gap are compared.
bool check_monotone(std::span<const std::optional<double>> rates, double tol);

// Confusion counts for one group. Counts may be weighted (non-integer).
struct GroupStats {
  double n = 0.0;
  double m = 0.0;   // positives (significant misreporters)
  double r = 0.0;   // negatives
  double audits = 0.0;
  double tp = 0.0;
  double fp = 0.0;

  double fpr() const { return fp / r; }        // alpha
  double tpr() const { return tp / m; }        // beta
  double precision() const { return tp / audits; }
};

// Stats for one bucket. `weighted` selects w_i or unit counts.
GroupStats group_stats(const Allocation& alloc, const Population& pop, double tau, int bucket,
                       bool weighted);

struct Lemma1Result {
  bool applicable = false;
  std::string reason;  // why the lemma's assumptions fail, when they do
  bool audits_ordered = false;  // A_2 >= A_1
  bool ratio_ordered = false;   // m_1 / m_2 <= p_1 / p_2
  double a1 = 0.0, a2 = 0.0;
  double m_ratio = 0.0, p_ratio = 0.0;
  bool pass = false;
};

// Under equal group sizes and equal TPR: A_2 >= A_1 iff m_1/m_2 <= p_1/p_2.
Lemma1Result lemma1_check(const GroupStats& g1, const GroupStats& g2);

struct Lemma2Result {
  bool applicable = false;
  std::string reason;
  double lhs = 0.0;  // A_2 - A_1
  double rhs = 0.0;  // (beta - alpha)(m_2 - m_1)
  // +1 when group 2 is audited more, -1 when less, 0 when equally.
  int direction = 0;
  bool pass = false;
};

// Under equal group sizes and shared (FPR, TPR) = (alpha, beta):
// A_2 - A_1 = (beta - alpha)(m_2 - m_1).
Lemma2Result lemma2_check(double alpha, double beta, const GroupStats& g1, const GroupStats& g2);

struct MetricsReport {
  std::string label;
  double revenue = 0.0;
  std::optional<double> no_change_rate;
  double cost = 0.0;
  double net_revenue = 0.0;
  std::optional<double> oracle_overlap;  // undefined for dollar budgets
  std::vector<std::optional<double>> audit_rate_by_bucket;
  double tau = kDefaultTau;
};

// Overlap is filled only when `alloc` is under a rate budget, against the
// oracle allocation at the same k.
MetricsReport evaluate(const std::string& label, const Allocation& alloc, const Population& pop,
                       double tau);

// Table-shaped CSV: label,revenue,no_change_rate,cost,net_revenue,oracle_overlap,tau
void write_metrics(std::span<const MetricsReport> reports, std::ostream& out);
std::vector<MetricsReport> read_metrics(std::istream& in);

}  // namespace auditalloc
