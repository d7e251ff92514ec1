#include "auditalloc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

#include "auditalloc/csv.hpp"

namespace auditalloc {

namespace {

void require_same_length(const Allocation& a, const Population& pop, const char* what) {
  if (a.size() != pop.size())
    throw DimensionError(std::string(what) + ": allocation has " + std::to_string(a.size()) +
                         " entries, population has " + std::to_string(pop.size()));
}

bool near(double a, double b, double tol) {
  return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace

double revenue(const Allocation& alloc, const Population& pop) {
  require_same_length(alloc, pop, "revenue");
  CompensatedSum s;
  for (std::size_t i = 0; i < pop.size(); ++i)
    s.add(alloc.alpha[i] * pop[i].weight * pop[i].misreport);
  return s.value();
}

std::optional<double> no_change_rate(const Allocation& alloc, const Population& pop, double tau) {
  require_same_length(alloc, pop, "no_change_rate");
  CompensatedSum audited, no_change;
  for (std::size_t i = 0; i < pop.size(); ++i) {
    const double mass = alloc.alpha[i] * pop[i].weight;
    audited.add(mass);
    if (!misreport_flag(pop[i].misreport, tau)) no_change.add(mass);
  }
  if (!(audited.value() > 0.0)) return std::nullopt;
  return no_change.value() / audited.value();
}

double total_cost(const Allocation& alloc, const Population& pop) {
  require_same_length(alloc, pop, "total_cost");
  CompensatedSum s;
  for (std::size_t i = 0; i < pop.size(); ++i) s.add(alloc.alpha[i] * pop[i].weight * pop[i].cost);
  return s.value();
}

double net_revenue(const Allocation& alloc, const Population& pop) {
  return revenue(alloc, pop) - total_cost(alloc, pop);
}

double oracle_overlap(const Allocation& alloc, const Allocation& oracle, const Population& pop,
                      double k) {
  require_same_length(alloc, pop, "oracle_overlap");
  require_same_length(oracle, pop, "oracle_overlap");
  for (const auto* a : {&alloc, &oracle}) {
    const auto* rb = std::get_if<RateBudget>(&a->budget);
    if (!rb || rb->k != k) throw BudgetError("oracle_overlap: allocations must share RateBudget k");
  }
  if (!(k > 0.0)) throw BudgetError("oracle_overlap: k must be positive");
  CompensatedSum s;
  for (std::size_t i = 0; i < pop.size(); ++i)
    s.add(std::min(alloc.alpha[i], oracle.alpha[i]) * pop[i].weight);
  return std::clamp(s.value() / (k * pop.total_weight()), 0.0, 1.0);
}

std::vector<std::optional<double>> audit_rate_by_bucket(const Allocation& alloc,
                                                        const Population& pop) {
  require_same_length(alloc, pop, "audit_rate_by_bucket");
  pop.require_bucketed("audit_rate_by_bucket");
  const int n_buckets = pop.n_buckets();
  std::vector<CompensatedSum> mass(n_buckets), weight(n_buckets);
  for (std::size_t i = 0; i < pop.size(); ++i) {
    const int b = pop[i].bucket - 1;
    mass[b].add(alloc.alpha[i] * pop[i].weight);
    weight[b].add(pop[i].weight);
  }
  std::vector<std::optional<double>> out(n_buckets);
  for (int b = 0; b < n_buckets; ++b)
    if (weight[b].value() > 0.0) out[b] = mass[b].value() / weight[b].value();
  return out;
}

bool check_monotone(std::span<const double> rates, double tol) {
  for (std::size_t b = 1; b < rates.size(); ++b)
    if (rates[b] < rates[b - 1] - tol) return false;
  return true;
}

bool check_monotone(std::span<const std::optional<double>> rates, double tol) {
  std::vector<double> defined;
  for (const auto& r : rates)
    if (r) defined.push_back(*r);
  return check_monotone(std::span<const double>(defined), tol);
}

GroupStats group_stats(const Allocation& alloc, const Population& pop, double tau, int bucket,
                       bool weighted) {
  require_same_length(alloc, pop, "group_stats");
  pop.require_bucketed("group_stats");
  CompensatedSum n, m, audits, tp;
  for (std::size_t i = 0; i < pop.size(); ++i) {
    if (pop[i].bucket != bucket) continue;
    const double w = weighted ? pop[i].weight : 1.0;
    const bool pos = misreport_flag(pop[i].misreport, tau);
    n.add(w);
    audits.add(alloc.alpha[i] * w);
    if (pos) {
      m.add(w);
      tp.add(alloc.alpha[i] * w);
    }
  }
  GroupStats g;
  g.n = n.value();
  g.m = m.value();
  g.r = g.n - g.m;
  g.audits = audits.value();
  g.tp = tp.value();
  g.fp = g.audits - g.tp;
  return g;
}

Lemma1Result lemma1_check(const GroupStats& g1, const GroupStats& g2) {
  constexpr double tol = 1e-12;
  Lemma1Result out;
  if (!near(g1.n, g2.n, tol)) {
    out.reason = "group sizes differ";
    return out;
  }
  if (!(g1.m > 0.0 && g2.m > 0.0 && g1.audits > 0.0 && g2.audits > 0.0 && g1.tp > 0.0 &&
        g2.tp > 0.0)) {
    out.reason = "need positive m and precision in both groups";
    return out;
  }
  if (!near(g1.tpr(), g2.tpr(), tol)) {
    out.reason = "true positive rates differ";
    return out;
  }
  out.applicable = true;
  out.a1 = g1.audits;
  out.a2 = g2.audits;
  out.m_ratio = g1.m / g2.m;
  out.p_ratio = g1.precision() / g2.precision();
  // Both sides are same-sign multiples of m_2/p_2 - m_1/p_1, so a shared
  // relative tie band keeps them consistent at equality.
  const double scale_a = std::max(std::abs(out.a1), std::abs(out.a2));
  out.audits_ordered = out.a2 - out.a1 >= -tol * scale_a;
  out.ratio_ordered = out.m_ratio - out.p_ratio <= tol * std::max(out.m_ratio, out.p_ratio);
  out.pass = out.audits_ordered == out.ratio_ordered;
  return out;
}

Lemma2Result lemma2_check(double alpha, double beta, const GroupStats& g1, const GroupStats& g2) {
  constexpr double tol = 1e-12;
  Lemma2Result out;
  if (!near(g1.n, g2.n, tol)) {
    out.reason = "group sizes differ";
    return out;
  }
  if (!(g1.m > 0.0 && g2.m > 0.0 && g1.r > 0.0 && g2.r > 0.0)) {
    out.reason = "need positives and negatives in both groups";
    return out;
  }
  if (!near(g1.fpr(), alpha, tol) || !near(g2.fpr(), alpha, tol) || !near(g1.tpr(), beta, tol) ||
      !near(g2.tpr(), beta, tol)) {
    out.reason = "groups do not share (alpha, beta)";
    return out;
  }
  out.applicable = true;
  out.lhs = g2.audits - g1.audits;
  out.rhs = (beta - alpha) * (g2.m - g1.m);
  const double scale = std::max({1.0, std::abs(g1.audits), std::abs(g2.audits)});
  out.pass = std::abs(out.lhs - out.rhs) <= tol * scale;
  out.direction = out.rhs > tol * scale ? 1 : (out.rhs < -tol * scale ? -1 : 0);
  return out;
}

MetricsReport evaluate(const std::string& label, const Allocation& alloc, const Population& pop,
                       double tau) {
  MetricsReport r;
  r.label = label;
  r.tau = tau;
  r.revenue = revenue(alloc, pop);
  r.no_change_rate = no_change_rate(alloc, pop, tau);
  r.cost = total_cost(alloc, pop);
  r.net_revenue = r.revenue - r.cost;
  if (const auto* rb = std::get_if<RateBudget>(&alloc.budget)) {
    const auto oracle = oracle_allocation(pop, *rb);
    r.oracle_overlap = oracle_overlap(alloc, oracle, pop, rb->k);
  }
  if (pop.bucketed()) r.audit_rate_by_bucket = audit_rate_by_bucket(alloc, pop);
  return r;
}

void write_metrics(std::span<const MetricsReport> reports, std::ostream& out) {
  out << "label,revenue,no_change_rate,cost,net_revenue,oracle_overlap,tau\n";
  for (const auto& r : reports) {
    if (r.label.find_first_of(",\n") != std::string::npos)
      throw DataError("metrics label must not contain commas or newlines");
    out << r.label << ',' << csv::format_double(r.revenue) << ','
        << csv::format_optional(r.no_change_rate) << ',' << csv::format_double(r.cost) << ','
        << csv::format_double(r.net_revenue) << ',' << csv::format_optional(r.oracle_overlap)
        << ',' << csv::format_double(r.tau) << '\n';
  }
}

std::vector<MetricsReport> read_metrics(std::istream& in) {
  const auto t = csv::read_table(in);
  std::vector<MetricsReport> out;
  for (std::size_t row = 0; row < t.rows.size(); ++row) {
    MetricsReport r;
    r.label = t.text(row, "label");
    r.revenue = t.number(row, "revenue");
    r.no_change_rate = t.optional_number(row, "no_change_rate");
    r.cost = t.number(row, "cost");
    r.net_revenue = t.number(row, "net_revenue");
    r.oracle_overlap = t.optional_number(row, "oracle_overlap");
    r.tau = t.number(row, "tau");
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace auditalloc
