#include "auditalloc/oracles.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace auditalloc::oracles {

namespace {

// Concave piecewise-linear value of putting mass A into one bucket.
struct BucketValue {
  std::vector<double> weight, value;  // sorted by value density, descending
  double total = 0.0;

  double operator()(double mass) const {
    double v = 0.0;
    for (std::size_t i = 0; i < weight.size() && mass > 0.0; ++i) {
      const double take = std::min(mass, weight[i]);
      v += take * value[i];
      mass -= take;
    }
    return v;
  }

  std::vector<double> breakpoints() const {
    std::vector<double> out{0.0};
    double c = 0.0;
    for (double w : weight) out.push_back(c += w);
    return out;
  }
};

struct Line {
  double a, b, c;  // a * A1 + b * A2 = c
};

}  // namespace

double monotone_optimum(const ScoreVector& scores, const Population& pop, RateBudget budget,
                        MonotoneBasis basis) {
  if (pop.n_buckets() != 3) throw DataError("monotone_optimum: need exactly three buckets");
  if (scores.scores.size() != pop.size()) throw DimensionError("monotone_optimum: size mismatch");
  std::array<BucketValue, 3> bv;
  std::array<std::vector<std::pair<double, double>>, 3> items;
  for (std::size_t i = 0; i < pop.size(); ++i) {
    const int b = pop[i].bucket - 1;
    if (b < 0 || b > 2) throw DataError("monotone_optimum: unbucketed record");
    items[b].push_back({std::max(scores.scores[i], 0.0), pop[i].weight});
  }
  for (int b = 0; b < 3; ++b) {
    if (items[b].empty()) throw DataError("monotone_optimum: empty bucket");
    std::sort(items[b].begin(), items[b].end(),
              [](const auto& x, const auto& y) { return x.first > y.first; });
    for (const auto& [s, w] : items[b]) {
      bv[b].value.push_back(s);
      bv[b].weight.push_back(w);
      bv[b].total += w;
    }
  }
  double total_weight = 0.0;
  for (const auto& r : pop.records()) total_weight += r.weight;
  const double M = budget.k * total_weight;
  const double W1 = bv[0].total, W2 = bv[1].total, W3 = bv[2].total;

  std::vector<Line> lines;
  for (double t : bv[0].breakpoints()) lines.push_back({1, 0, t});
  for (double t : bv[1].breakpoints()) lines.push_back({0, 1, t});
  for (double t : bv[2].breakpoints()) lines.push_back({1, 1, M - t});
  if (basis == MonotoneBasis::Rate) {
    lines.push_back({1 / W1, -1 / W2, 0});
    lines.push_back({1 / W3, 1 / W2 + 1 / W3, M / W3});
  } else {
    lines.push_back({1, -1, 0});
    lines.push_back({1, 2, M});
  }

  const double tol = 1e-9 * std::max(1.0, M);
  double best = -1.0;
  for (std::size_t p = 0; p < lines.size(); ++p) {
    for (std::size_t q = p + 1; q < lines.size(); ++q) {
      const auto& L1 = lines[p];
      const auto& L2 = lines[q];
      const double det = L1.a * L2.b - L1.b * L2.a;
      if (std::abs(det) < 1e-14) continue;
      const double a1 = (L1.c * L2.b - L1.b * L2.c) / det;
      const double a2 = (L1.a * L2.c - L1.c * L2.a) / det;
      const double a3 = M - a1 - a2;
      if (a1 < -tol || a2 < -tol || a3 < -tol) continue;
      if (a1 > W1 + tol || a2 > W2 + tol || a3 > W3 + tol) continue;
      if (basis == MonotoneBasis::Rate) {
        if (a1 / W1 > a2 / W2 + tol / W2 || a2 / W2 > a3 / W3 + tol / W3) continue;
      } else {
        if (a1 > a2 + tol || a2 > a3 + tol) continue;
      }
      const double v = bv[0](std::clamp(a1, 0.0, W1)) + bv[1](std::clamp(a2, 0.0, W2)) +
                       bv[2](std::clamp(a3, 0.0, W3));
      best = std::max(best, v);
    }
  }
  if (best < 0.0) throw BudgetError("monotone_optimum: infeasible");
  return best;
}

double knapsack_optimum(const ScoreVector& scores, const Population& pop, DollarBudget budget) {
  const std::size_t n = pop.size();
  if (n > 20) throw SizeError("knapsack_optimum: n must be <= 20");
  std::vector<double> value(n), spend(n);
  for (std::size_t i = 0; i < n; ++i) {
    value[i] = scores.scores[i] * pop[i].weight;
    spend[i] = pop[i].cost * pop[i].weight;
  }
  double best = 0.0;
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    double v = 0.0, s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (mask >> i & 1u) {
        v += value[i];
        s += spend[i];
      }
    if (s > budget.dollars * (1 + 1e-12)) continue;
    best = std::max(best, v);
    const double left = budget.dollars - s;
    for (std::size_t j = 0; j < n; ++j) {
      if (mask >> j & 1u) continue;
      const double f = std::min(1.0, left / spend[j]);
      best = std::max(best, v + f * value[j]);
    }
  }
  return best;
}

double rate_budget_optimum(const ScoreVector& scores, const Population& pop, RateBudget budget) {
  const std::size_t n = pop.size();
  if (n > 16) throw SizeError("rate_budget_optimum: n must be <= 16");
  double total = 0.0;
  for (const auto& r : pop.records()) total += r.weight;
  const double M = budget.k * total;
  const double tol = 1e-12 * std::max(1.0, M);
  double best = -std::numeric_limits<double>::infinity();
  for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
    double v = 0.0, mass = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (mask >> i & 1u) {
        v += scores.scores[i] * pop[i].weight;
        mass += pop[i].weight;
      }
    if (mass > M + tol) continue;
    const double left = M - mass;
    if (left <= tol) {
      best = std::max(best, v);
      continue;
    }
    for (std::size_t j = 0; j < n; ++j) {
      if (mask >> j & 1u || pop[j].weight < left) continue;
      best = std::max(best, v + left * scores.scores[j]);
    }
  }
  return best;
}

}  // namespace auditalloc::oracles
