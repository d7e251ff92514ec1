#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "auditalloc/population.hpp"
#include <nlohmann/json.hpp>

#include "doctest.h"

using namespace auditalloc;

namespace {

Population make(std::vector<double> incomes, std::vector<double> weights) {
  std::vector<TaxpayerRecord> recs;
  for (std::size_t i = 0; i < incomes.size(); ++i) {
    TaxpayerRecord r;
    r.id = static_cast<std::int64_t>(i);
    r.reported_income = incomes[i];
    r.weight = weights[i];
    r.features = {0.0};
    recs.push_back(r);
  }
  return Population(std::move(recs), 10);
}

struct DecileStats {
  std::vector<double> weight, pos_weight, pos_adjust_weight, pos_adjust_sum, cost_sum;
  std::vector<int> count;
};

DecileStats decile_stats(const Population& pop, double tau) {
  DecileStats s;
  for (auto* v : {&s.weight, &s.pos_weight, &s.pos_adjust_weight, &s.pos_adjust_sum, &s.cost_sum})
    v->assign(kDeciles, 0.0);
  s.count.assign(kDeciles, 0);
  for (const auto& r : pop.records()) {
    const int d = r.bucket - 1;
    s.weight[d] += r.weight;
    s.count[d] += 1;
    s.cost_sum[d] += r.weight * r.cost;
    if (r.misreport > tau) s.pos_weight[d] += r.weight;
    if (r.misreport > 0) {
      s.pos_adjust_weight[d] += r.weight;
      s.pos_adjust_sum[d] += r.weight * r.misreport;
    }
  }
  return s;
}

}  // namespace

TEST_CASE("misreport_flag is strict") {
  CHECK(misreport_flag(201, 200));
  CHECK_FALSE(misreport_flag(200, 200));
  CHECK_FALSE(misreport_flag(-50, 200));
}

TEST_CASE("population validation") {
  CHECK_THROWS_AS(make({1, 2}, {1, -1}), DataError);
  CHECK_THROWS_AS(make({-1}, {1}), DataError);
  std::vector<TaxpayerRecord> dup(2);
  dup[0].id = dup[1].id = 3;
  CHECK_THROWS_AS(Population{dup}, DataError);
  const auto p = make({1, 2, 3}, {0.1, 0.2, 0.3});
  CHECK(p.total_weight() == doctest::Approx(0.6).epsilon(1e-15));
  CHECK_FALSE(p.bucketed());
  CHECK_THROWS_AS(p.require_bucketed("x"), DataError);
}

TEST_CASE("assign_buckets examples") {
  SUBCASE("unit weights") {
    const auto b = assign_buckets(make({10, 20, 30, 40}, {1, 1, 1, 1}), 2).buckets();
    CHECK(b == std::vector<int>{1, 1, 2, 2});
  }
  SUBCASE("weighted median lands after the heavy record") {
    const auto b = assign_buckets(make({10, 20, 30, 40}, {3, 1, 1, 1}), 2).buckets();
    CHECK(b == std::vector<int>{1, 2, 2, 2});
  }
  SUBCASE("equal incomes are split by id") {
    const auto b = assign_buckets(make({5, 5, 5, 5, 5, 5}, {1, 1, 1, 1, 1, 1}), 3).buckets();
    CHECK(b == std::vector<int>{1, 1, 2, 2, 3, 3});
  }
  SUBCASE("input order does not matter") {
    const auto b = assign_buckets(make({40, 10, 30, 20}, {1, 1, 1, 1}), 2).buckets();
    CHECK(b == std::vector<int>{2, 1, 2, 1});
  }
  CHECK_THROWS_AS(assign_buckets(make({1, 2}, {1, 1}), 1), DataError);
}

TEST_CASE("assign_buckets balance and idempotence on a generated population") {
  PopulationConfig cfg;
  cfg.n_records = 5000;
  cfg.seed = 3;
  const auto pop = generate_population(cfg);
  for (int nb : {2, 5, 10, 17}) {
    const auto p = assign_buckets(pop, nb);
    std::vector<CompensatedSum> bw(nb);
    double wmax = 0.0;
    for (const auto& r : p.records()) {
      bw[r.bucket - 1].add(r.weight);
      wmax = std::max(wmax, r.weight);
    }
    CompensatedSum total;
    for (int b = 0; b < nb; ++b) {
      CHECK(std::abs(bw[b].value() - p.total_weight() / nb) <= wmax);
      total.add(bw[b].value());
    }
    CHECK(std::abs(total.value() - p.total_weight()) <= 1e-9 * p.total_weight());
    CHECK(assign_buckets(p, nb).buckets() == p.buckets());
    // bucket 1 holds the lowest incomes
    double max_prev = -1.0;
    for (int b = 1; b <= nb; ++b) {
      double lo = 1e300, hi = -1;
      for (const auto& r : p.records())
        if (r.bucket == b) {
          lo = std::min(lo, r.reported_income);
          hi = std::max(hi, r.reported_income);
        }
      CHECK(lo >= max_prev);
      max_prev = hi;
    }
  }
}

TEST_CASE("weighted_quantile matches numpy linear interpolation") {
  // Expected values computed with numpy.quantile(..., method="linear") on
  // the unit-weight or duplicated arrays.
  const std::vector<double> d{-100, 0, 10, 1e9};
  const std::vector<double> ones(4, 1.0);
  CHECK(weighted_quantile(d, ones, 0.01) == doctest::Approx(-97.0).epsilon(1e-12));
  CHECK(weighted_quantile(d, ones, 0.99) == doctest::Approx(970000000.3).epsilon(1e-12));
  CHECK(weighted_quantile(d, ones, 0.0) == -100);
  CHECK(weighted_quantile(d, ones, 1.0) == 1e9);

  const std::vector<double> v{5, 1, 3, 2}, w{2, 1, 3, 1};
  CHECK(weighted_quantile(v, w, 0.1) == doctest::Approx(1.6).epsilon(1e-12));
  CHECK(weighted_quantile(v, w, 0.25) == doctest::Approx(2.5).epsilon(1e-12));
  CHECK(weighted_quantile(v, w, 0.5) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(weighted_quantile(v, w, 0.9) == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("winsorize_misreports") {
  std::vector<TaxpayerRecord> recs;
  const std::vector<double> d{-100, 0, 10, 1e9};
  for (int i = 0; i < 4; ++i) {
    TaxpayerRecord r;
    r.id = 10 + i;
    r.misreport = d[i];
    recs.push_back(r);
  }
  const Population pop(recs);
  const auto w = winsorize_misreports(pop, 0.01, 0.99);
  CHECK(w[0].misreport == doctest::Approx(-97.0));
  CHECK(w[1].misreport == 0.0);
  CHECK(w[2].misreport == 10.0);
  CHECK(w[3].misreport == doctest::Approx(970000000.3));
  CHECK(w.ids() == pop.ids());
  CHECK(winsorize_misreports(pop, 0.0, 1.0).misreports() == pop.misreports());

  for (auto& r : recs) r.misreport = 42.0;
  const Population flat(recs);
  CHECK(winsorize_misreports(flat, 0.01, 0.99).misreports() == flat.misreports());
  CHECK_THROWS_AS(winsorize_misreports(pop, 0.5, 0.5), DataError);
}

TEST_CASE("split") {
  std::vector<double> inc(1000), w(1000, 1.0);
  for (int i = 0; i < 1000; ++i) inc[i] = i;
  const auto pop = make(inc, w);
  const auto s1 = split(pop, 0.25, 1);
  // 3-sigma binomial band around 250
  CHECK(s1.test.size() >= 200);
  CHECK(s1.test.size() <= 300);
  std::set<std::int64_t> all;
  for (const auto& r : s1.train.records()) all.insert(r.id);
  for (const auto& r : s1.test.records()) CHECK(all.insert(r.id).second);
  CHECK(all.size() == 1000);
  const auto s2 = split(pop, 0.25, 1);
  CHECK(s2.test.ids() == s1.test.ids());
  CHECK(s2.train.ids() == s1.train.ids());
  CHECK(split(pop, 0.25, 2).test.ids() != s1.test.ids());

  const auto two = split(make({1, 2}, {1, 1}), 0.5, 9);
  CHECK(two.train.size() == 1);
  CHECK(two.test.size() == 1);
  CHECK_THROWS_AS(split(pop, 1.0, 1), DataError);
}

TEST_CASE("weighted_subsample") {
  const auto pop = make({1, 2}, {3, 1});
  const auto sub = weighted_subsample(pop, 40000, 5);
  REQUIRE(sub.population.size() == 40000);
  double n0 = 0;
  for (auto id : sub.source_ids) n0 += id == 0;
  // multinomial: p = 0.75, 3 sigma = 3 * sqrt(p(1-p)/n)
  CHECK(std::abs(n0 / 40000 - 0.75) <= 3 * std::sqrt(0.75 * 0.25 / 40000));
  for (const auto& r : sub.population.records()) CHECK(r.weight == 1.0);
  CHECK(weighted_subsample(pop, 40000, 5).source_ids == sub.source_ids);

  const auto one = weighted_subsample(make({7}, {2}), 5, 1);
  CHECK(one.source_ids == std::vector<std::int64_t>(5, 0));

  SUBCASE("frequencies converge") {
    std::vector<double> inc{1, 2, 3, 4, 5}, w{1, 2, 3, 4, 10};
    const auto p = make(inc, w);
    const std::int64_t n = 100000;
    const auto s = weighted_subsample(p, n, 11);
    std::map<std::int64_t, double> freq;
    for (auto id : s.source_ids) freq[id] += 1.0 / n;
    for (int i = 0; i < 5; ++i) {
      const double q = w[i] / 20.0;
      CHECK(std::abs(freq[i] - q) <= 4 * std::sqrt(q * (1 - q) / n));
    }
  }
}

TEST_CASE("csv load and round trip") {
  SUBCASE("three well-formed rows") {
    std::istringstream in(
        "id,weight,reported_income,misreport,cost,f0\n"
        "0,1,100,5,2,0.5\n1,2,200,-3,4,1\n2,3,300,0,6,2\n");
    const auto p = load_population(in);
    CHECK(p.size() == 3);
    CHECK(p.ids() == std::vector<std::int64_t>{0, 1, 2});
    CHECK(p.total_weight() == 6.0);
  }
  SUBCASE("negative weight names row and column") {
    std::istringstream in(
        "id,weight,reported_income,misreport,cost\n0,1,100,5,2\n1,-1,200,-3,4\n");
    try {
      load_population(in);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.row() == 2);
      CHECK(e.column() == "weight");
    }
  }
  SUBCASE("non-numeric and missing columns") {
    std::istringstream bad("id,weight,reported_income,misreport,cost\n0,1,abc,5,2\n");
    CHECK_THROWS_AS(load_population(bad), ParseError);
    std::istringstream missing("id,weight,reported_income,cost\n0,1,2,5\n");
    try {
      load_population(missing);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.column() == "misreport");
    }
    std::istringstream zero_cost("id,weight,reported_income,misreport,cost\n0,1,2,5,0\n");
    CHECK_THROWS_AS(load_population(zero_cost), ParseError);
  }
  SUBCASE("generated population survives save and load exactly") {
    PopulationConfig cfg;
    cfg.n_records = 500;
    cfg.seed = 4;
    const auto pop = generate_population(cfg);
    std::stringstream buf;
    save_population(pop, buf);
    const auto back = load_population(buf);
    REQUIRE(back.size() == pop.size());
    for (std::size_t i = 0; i < pop.size(); ++i) {
      CHECK(back[i].id == pop[i].id);
      CHECK(back[i].weight == pop[i].weight);
      CHECK(back[i].reported_income == pop[i].reported_income);
      CHECK(back[i].misreport == pop[i].misreport);
      CHECK(back[i].cost == pop[i].cost);
      CHECK(back[i].features == pop[i].features);
      CHECK(back[i].bucket == 0);
    }
  }
}

TEST_CASE("config validation and json") {
  PopulationConfig cfg;
  cfg.misreport_rate[4] = 0.1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK_THROWS_AS(generate_population(cfg), ConfigError);

  PopulationConfig small;
  small.n_records = 99;
  CHECK_THROWS_AS(generate_population(small), SizeError);

  PopulationConfig peak;
  peak.mean_adjustment[3] = 1e6;
  CHECK_THROWS_AS(peak.validate(), ConfigError);

  nlohmann::json j = PopulationConfig{};
  PopulationConfig back = j.get<PopulationConfig>();
  CHECK(back.mean_cost == PopulationConfig{}.mean_cost);
  CHECK(back.misreport_rate == PopulationConfig{}.misreport_rate);

  const auto j2 = nlohmann::json::parse(R"({"n_records": 1000, "cost_ratio": 10})");
  const auto c2 = j2.get<PopulationConfig>();
  CHECK(c2.n_records == 1000);
  CHECK(c2.mean_cost.back() / c2.mean_cost.front() == doctest::Approx(10.0));
  CHECK_THROWS_AS(nlohmann::json::parse(R"({"nonsense": 1})").get<PopulationConfig>(),
                  ConfigError);
}

TEST_CASE("generator stylized facts, default config seed 7") {
  PopulationConfig cfg;
  cfg.seed = 7;
  const auto pop = generate_population(cfg);
  REQUIRE(pop.size() == 50000);
  REQUIRE(pop.bucketed());
  const auto s = decile_stats(pop, 200.0);

  // Rates recomputed from the emitted records; adjacent deciles may only
  // decrease within 3 binomial sigma of the realized decile sizes.
  std::vector<double> rate(kDeciles);
  for (int d = 0; d < kDeciles; ++d) rate[d] = s.pos_weight[d] / s.weight[d];
  for (int d = 1; d < kDeciles; ++d) {
    const double sd = std::sqrt(rate[d] * (1 - rate[d]) / s.count[d] +
                                rate[d - 1] * (1 - rate[d - 1]) / s.count[d - 1]);
    CHECK(rate[d] >= rate[d - 1] - 3 * sd);
  }

  std::vector<double> mean_adj(kDeciles);
  for (int d = 0; d < kDeciles; ++d) mean_adj[d] = s.pos_adjust_sum[d] / s.pos_adjust_weight[d];
  CHECK(std::max_element(mean_adj.begin(), mean_adj.end()) - mean_adj.begin() == kDeciles - 1);

  const double ratio = (s.cost_sum[9] / s.weight[9]) / (s.cost_sum[0] / s.weight[0]);
  CHECK(ratio >= 36.9);
  CHECK(ratio <= 45.1);

  const auto again = generate_population(cfg);
  CHECK(again.misreports() == pop.misreports());
  CHECK(again.weights() == pop.weights());
  CHECK(again[123].features == pop[123].features);
}

TEST_CASE("zero misreport rates give zero misreports") {
  PopulationConfig cfg;
  cfg.n_records = 2000;
  cfg.misreport_rate.fill(0.0);
  const auto pop = generate_population(cfg);
  for (const auto& r : pop.records()) CHECK(r.misreport == 0.0);
}
