#include <cmath>
#include <sstream>

#include "auditalloc/metrics.hpp"
#include "doctest.h"

using namespace auditalloc;

namespace {

Population make(std::vector<double> w, std::vector<double> delta, std::vector<double> cost = {},
                std::vector<int> bucket = {}, int n_buckets = 10) {
  std::vector<TaxpayerRecord> out;
  for (std::size_t i = 0; i < w.size(); ++i) {
    TaxpayerRecord r;
    r.id = static_cast<std::int64_t>(i);
    r.weight = w[i];
    r.misreport = delta[i];
    r.cost = cost.empty() ? 1.0 : cost[i];
    r.bucket = bucket.empty() ? 0 : bucket[i];
    out.push_back(r);
  }
  return Population(std::move(out), n_buckets);
}

Allocation alloc(const Population& p, std::vector<double> alpha, BudgetSpec b = RateBudget{}) {
  Allocation a;
  a.ids = p.ids();
  a.alpha = std::move(alpha);
  a.budget = b;
  return a;
}

// Equal-size groups with counts chosen to hit a target TPR and FPR.
GroupStats stats(double n, double m, double fpr, double tpr) {
  GroupStats g;
  g.n = n;
  g.m = m;
  g.r = n - m;
  g.tp = tpr * m;
  g.fp = fpr * g.r;
  g.audits = g.tp + g.fp;
  return g;
}

}  // namespace

TEST_CASE("revenue, cost and net revenue examples") {
  const auto p = make({2, 1, 3}, {100, 50, -20});
  CHECK(revenue(alloc(p, {1, 0, 1}), p) == 140.0);
  CHECK(revenue(alloc(p, {0, 0, 0}), p) == 0.0);
  const auto q = make({2}, {10});
  CHECK(revenue(alloc(q, {0.5}), q) == 10.0);

  const auto c = make({2, 1}, {0, 0}, {5, 7});
  CHECK(total_cost(alloc(c, {1, 0}), c) == 10.0);
  CHECK(total_cost(alloc(c, {0, 0}), c) == 0.0);
  CHECK(net_revenue(alloc(c, {0, 0}), c) == 0.0);

  Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> w(8), d(8), cost(8), a(8);
    for (int i = 0; i < 8; ++i) {
      w[i] = rng.uniform(0.1, 10);
      d[i] = rng.uniform(-100, 1000);
      cost[i] = rng.uniform(1, 50);
      a[i] = rng.uniform();
    }
    const auto pr = make(w, d, cost);
    const auto al = alloc(pr, a);
    CHECK(net_revenue(al, pr) == revenue(al, pr) - total_cost(al, pr));
    const auto rep = evaluate("m", al, pr, 200);
    CHECK(rep.net_revenue == rep.revenue - rep.cost);
    // linearity in alpha
    auto half = a;
    for (auto& x : half) x *= 0.5;
    CHECK(revenue(alloc(pr, half), pr) == doctest::Approx(0.5 * revenue(al, pr)).epsilon(1e-12));
  }
}

TEST_CASE("no-change rate") {
  // m = [1, 0, 1, 1] at tau 200
  const auto p = make({1, 1, 1, 1}, {500, 100, 300, 900});
  CHECK(*no_change_rate(alloc(p, {1, 1, 1, 0}), p, 200) == doctest::Approx(1.0 / 3));
  CHECK(*no_change_rate(alloc(p, {1, 0, 1, 1}), p, 200) == 0.0);
  CHECK_FALSE(no_change_rate(alloc(p, {0, 0, 0, 0}), p, 200).has_value());
  // raising tau can only turn changes into no-changes
  CHECK(*no_change_rate(alloc(p, {1, 0, 1, 1}), p, 400) == doctest::Approx(1.0 / 3));
}

TEST_CASE("oracle overlap") {
  const auto p = make({1, 1, 1, 1}, {0, 0, 0, 0});
  const auto a = alloc(p, {0, 1, 1, 0}, RateBudget{0.5});
  const auto o = alloc(p, {0, 0, 1, 1}, RateBudget{0.5});
  CHECK(oracle_overlap(a, o, p, 0.5) == 0.5);
  CHECK(oracle_overlap(o, a, p, 0.5) == 0.5);
  CHECK(oracle_overlap(a, a, p, 0.5) == 1.0);
  CHECK(oracle_overlap(a, alloc(p, {1, 0, 0, 1}, RateBudget{0.5}), p, 0.5) == 0.0);
  CHECK_THROWS_AS(oracle_overlap(a, alloc(p, {0, 0, 1, 1}, RateBudget{0.25}), p, 0.5),
                  BudgetError);
  CHECK_THROWS_AS(oracle_overlap(a, alloc(p, {0, 0, 1, 1}, DollarBudget{5}), p, 0.5),
                  BudgetError);
}

TEST_CASE("oracle allocation sanity") {
  const auto p = make({1, 2, 1, 3, 1}, {1000, 50, 700, 300, -10});
  const RateBudget b{0.4};  // mass 3.2 <= misreporter mass 5
  const auto o = oracle_allocation(p, b);
  CHECK(oracle_overlap(o, o, p, b.k) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(*no_change_rate(o, p, 200) == 0.0);
}

TEST_CASE("audit rate by bucket and monotonicity") {
  const auto p = make({1, 1, 1, 1}, {0, 0, 0, 0}, {}, {1, 1, 2, 2}, 2);
  const auto r = audit_rate_by_bucket(alloc(p, {1, 0, 1, 1}), p);
  CHECK(*r[0] == 0.5);
  CHECK(*r[1] == 1.0);
  const auto all = audit_rate_by_bucket(alloc(p, {1, 1, 1, 1}), p);
  CHECK(*all[0] == 1.0);
  CHECK(*all[1] == 1.0);

  const auto gap = make({1, 1}, {0, 0}, {}, {1, 3}, 3);
  const auto rg = audit_rate_by_bucket(alloc(gap, {0.2, 0.5}), gap);
  CHECK_FALSE(rg[1].has_value());
  CHECK(check_monotone(std::span<const std::optional<double>>(rg), 0.0));

  const std::vector<double> up{0.1, 0.1, 0.2}, down{0.3, 0.1};
  CHECK(check_monotone(std::span<const double>(up), 0.0));
  CHECK_FALSE(check_monotone(std::span<const double>(down), 0.0));
  CHECK(check_monotone(std::span<const double>(down), 0.25));
}

TEST_CASE("group stats follow the confusion-count identities") {
  const auto p = make({1, 2, 1, 1}, {500, 10, 300, 0}, {}, {1, 1, 1, 2}, 2);
  const auto a = alloc(p, {1, 0.5, 0, 1});
  const auto g = group_stats(a, p, 200, 1, true);
  CHECK(g.n == 4);
  CHECK(g.m == 2);
  CHECK(g.r == 2);
  CHECK(g.audits == 2);
  CHECK(g.tp == 1);
  CHECK(g.fp == 1);
  const auto u = group_stats(a, p, 200, 1, false);
  CHECK(u.n == 3);
  CHECK(u.audits == 1.5);
}

TEST_CASE("lemma 1") {
  // m1=4, m2=8, p1=p2=0.5, beta=0.25 -> A1=2, A2=4
  GroupStats g1{20, 4, 16, 2, 1, 1}, g2{20, 8, 12, 4, 2, 2};
  const auto r = lemma1_check(g1, g2);
  REQUIRE(r.applicable);
  CHECK(r.a1 == 2);
  CHECK(r.a2 == 4);
  CHECK(r.audits_ordered);
  CHECK(r.m_ratio == 0.5);
  CHECK(r.p_ratio == 1.0);
  CHECK(r.ratio_ordered);
  CHECK(r.pass);

  const auto sym = lemma1_check(g1, g1);
  CHECK(sym.pass);
  CHECK(sym.audits_ordered);
  CHECK(sym.ratio_ordered);

  GroupStats other = g2;
  other.n = 21;
  CHECK_FALSE(lemma1_check(g1, other).applicable);
  GroupStats off = g2;
  off.tp = 3;
  CHECK_FALSE(lemma1_check(g1, off).applicable);
}

TEST_CASE("lemma 2") {
  const auto g1 = stats(10, 2, 0.1, 0.5), g2 = stats(10, 6, 0.1, 0.5);
  CHECK(g1.audits == doctest::Approx(1.8));
  CHECK(g2.audits == doctest::Approx(3.4));
  const auto r = lemma2_check(0.1, 0.5, g1, g2);
  REQUIRE(r.applicable);
  CHECK(r.lhs == doctest::Approx(1.6));
  CHECK(r.rhs == doctest::Approx(1.6));
  CHECK(r.direction == 1);
  CHECK(r.pass);

  const auto e = lemma2_check(0.3, 0.3, stats(10, 2, 0.3, 0.3), stats(10, 6, 0.3, 0.3));
  CHECK(e.pass);
  CHECK(e.direction == 0);

  const auto neg = lemma2_check(0.6, 0.2, stats(10, 2, 0.6, 0.2), stats(10, 6, 0.6, 0.2));
  CHECK(neg.pass);
  CHECK(neg.direction == -1);

  CHECK_FALSE(lemma2_check(0.1, 0.5, g1, stats(10, 6, 0.2, 0.5)).applicable);
}

TEST_CASE("weighted metrics equal unweighted metrics on the expanded population") {
  Rng rng(8);
  for (int t = 0; t < 20; ++t) {
    const int n = 6;
    std::vector<double> w, d, c, a, we, de, ce, ae;
    std::vector<int> b, be;
    for (int i = 0; i < n; ++i) {
      const int wi = 1 + static_cast<int>(rng.below(4));
      w.push_back(wi);
      d.push_back(std::round(rng.uniform(-300, 3000)));
      c.push_back(std::round(rng.uniform(1, 40)));
      a.push_back(rng.below(2) ? 1.0 : 0.0);
      b.push_back(1 + i % 2);
      for (int k = 0; k < wi; ++k) {
        we.push_back(1);
        de.push_back(d.back());
        ce.push_back(c.back());
        ae.push_back(a.back());
        be.push_back(b.back());
      }
    }
    const auto p = make(w, d, c, b, 2), pe = make(we, de, ce, be, 2);
    const auto al = alloc(p, a), ale = alloc(pe, ae);
    CHECK(revenue(al, p) == revenue(ale, pe));
    CHECK(total_cost(al, p) == total_cost(ale, pe));
    CHECK(no_change_rate(al, p, 200) == no_change_rate(ale, pe, 200));
    CHECK(audit_rate_by_bucket(al, p) == audit_rate_by_bucket(ale, pe));
  }
}

TEST_CASE("metrics csv round trip") {
  std::vector<MetricsReport> reps(2);
  reps[0].label = "oracle";
  reps[0].revenue = 1.5e6;
  reps[0].no_change_rate = 0.0;
  reps[0].cost = 1234.5;
  reps[0].net_revenue = 1.5e6 - 1234.5;
  reps[0].oracle_overlap = 1.0;
  reps[1].label = "roi";
  reps[1].revenue = 0.1;
  std::stringstream buf;
  write_metrics(reps, buf);
  const auto back = read_metrics(buf);
  REQUIRE(back.size() == 2);
  CHECK(back[0].revenue == reps[0].revenue);
  CHECK(back[0].net_revenue == reps[0].net_revenue);
  CHECK(back[1].label == "roi");
  CHECK_FALSE(back[1].oracle_overlap.has_value());
  CHECK_FALSE(back[1].no_change_rate.has_value());
  reps[0].label = "a,b";
  std::stringstream bad;
  CHECK_THROWS_AS(write_metrics(reps, bad), DataError);
}
