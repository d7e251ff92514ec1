// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fail.
// Usage: acceptance [output-dir]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>

#include "auditalloc/experiment.hpp"

using namespace auditalloc;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string num(double x) {
  std::ostringstream s;
  s << std::setprecision(10) << x;
  return s.str();
}

Outcome suite_outcome(const std::string& name, const fs::path& out, double time_limit,
                      const SuiteOptions& opt = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = run_suite(name, out, opt);
  const double secs = seconds_since(t0);
  std::string detail;
  for (const auto& c : r.checks)
    detail += (detail.empty() ? "" : "; ") + c.criterion + " " + c.detail + (c.pass ? "" : " [failed]");
  detail += "; " + num(secs) + " s";
  return {r.passed() && secs < time_limit, detail};
}

Population random_population(Rng& rng, std::size_t n, int buckets) {
  std::vector<TaxpayerRecord> recs(n);
  for (std::size_t i = 0; i < n; ++i) {
    recs[i].id = static_cast<std::int64_t>(i) * 7 + 3;
    recs[i].weight = rng.uniform(0.2, 10.0);
    recs[i].cost = rng.uniform(0.5, 100.0);
    recs[i].bucket = i < static_cast<std::size_t>(buckets) ? static_cast<int>(i) + 1
                                                           : 1 + static_cast<int>(rng.below(buckets));
  }
  return Population(std::move(recs), buckets);
}

// Budget identities for 1,000 random allocations, plus exchange optimality
// for every top-k allocation: nothing left partly unaudited outranks
// something audited.
Outcome budget_exactness() {
  Rng rng(derive_seed(2, 0));
  int bad_identity = 0, bad_exchange = 0, bad_range = 0;
  for (int k = 0; k < 1000; ++k) {
    const auto n = 1 + static_cast<std::size_t>(rng.below(60));
    const int buckets = 1 + static_cast<int>(rng.below(std::min<std::uint64_t>(n, 5)));
    const auto pop = random_population(rng, n, buckets);
    ScoreVector s{pop.ids(), {}};
    for (std::size_t i = 0; i < n; ++i)
      s.scores.push_back(rng.bernoulli(0.3) ? std::round(rng.normal(0, 3)) : rng.normal(0, 3));
    double W = 0, C = 0;
    for (const auto& r : pop.records()) {
      W += r.weight;
      C += r.weight * r.cost;
    }
    Allocation a;
    double target = 0;
    const int kind = k % 3;
    if (kind == 2) {
      const DollarBudget b{rng.uniform(0.01, 1.3) * C};
      a = roi_allocation(s, pop, b);
      target = std::min(b.dollars, C);
      double spent = 0;
      for (std::size_t i = 0; i < n; ++i) spent += a.alpha[i] * pop[i].weight * pop[i].cost;
      bad_identity += std::abs(spent - target) > 1e-9 * std::max(1.0, target);
    } else {
      const RateBudget b{rng.uniform(0.01, 1.0)};
      try {
        a = kind == 0 ? topk_allocation(s, pop, b) : monotone_allocation(s, pop, b);
      } catch (const BudgetError&) {
        // Only the monotone program can be infeasible; topk never is.
        bad_identity += kind == 0;
        continue;
      }
      target = b.k * W;
      double mass = 0;
      for (std::size_t i = 0; i < n; ++i) mass += a.alpha[i] * pop[i].weight;
      bad_identity += std::abs(mass - target) > 1e-9 * std::max(1.0, target);
      if (kind == 0)
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < n; ++j)
            bad_exchange += a.alpha[i] < 1 && a.alpha[j] > 0 && s.scores[i] > s.scores[j];
    }
    for (double x : a.alpha) bad_range += !(x >= 0 && x <= 1);
  }
  return {bad_identity == 0 && bad_exchange == 0 && bad_range == 0,
          "identity violations " + std::to_string(bad_identity) + "; exchange violations " +
              std::to_string(bad_exchange) + "; alpha outside [0,1] " + std::to_string(bad_range)};
}

Outcome oracle_sanity() {
  int overlap_bad = 0, nochange_checked = 0, nochange_bad = 0, revenue_bad = 0;
  double worst_margin = std::numeric_limits<double>::infinity();
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    ExperimentConfig c;
    PopulationConfig p;
    p.n_records = 8000;
    c.population.generate = p;
    c.seed = 1000 + seed;
    ModelSpec logit, gb, rf;
    logit.family = ModelFamily::Logistic;
    gb.family = ModelFamily::GradientBoost;
    rf.family = ModelFamily::RandomForest;
    rf.hyperparameters["n_trees"] = 30;
    c.models = {{"Logistic", logit, TargetKind::classification(), {}},
                {"GB-classification", gb, TargetKind::classification(), {}},
                {"GB-regression", gb, TargetKind::regression(), {}},
                {"RF-regression", rf, TargetKind::regression(), {}}};
    const auto r = run_experiment(c);
    const auto& o = r.at("Oracle").metrics;
    overlap_bad += !(o.oracle_overlap && std::abs(*o.oracle_overlap - 1.0) <= 1e-12);

    double W = 0, misreporter_mass = 0;
    for (const auto& rec : r.test.records()) {
      W += rec.weight;
      if (misreport_flag(rec.misreport, c.tau)) misreporter_mass += rec.weight;
    }
    if (std::get<RateBudget>(c.budget).k * W <= misreporter_mass) {
      ++nochange_checked;
      nochange_bad += !(o.no_change_rate && *o.no_change_rate == 0.0);
    }
    for (const auto& m : r.models) {
      if (m.label == "Oracle") continue;
      worst_margin = std::min(worst_margin, o.revenue - m.metrics.revenue);
      revenue_bad += m.metrics.revenue > o.revenue;
    }
  }
  return {overlap_bad == 0 && nochange_bad == 0 && revenue_bad == 0 && nochange_checked > 0,
          "overlap != 1 on " + std::to_string(overlap_bad) + " populations; no-change != 0 on " +
              std::to_string(nochange_bad) + " of " + std::to_string(nochange_checked) +
              " applicable; models out-earning the oracle " + std::to_string(revenue_bad) +
              "; smallest oracle margin " + num(worst_margin)};
}

Outcome reduction_guarantee() {
  PopulationConfig p;
  p.n_records = 50'000;
  p.seed = 606;
  const auto sample = weighted_subsample(generate_population(p), 10'000, 607).population;
  ModelSpec logit;
  logit.family = ModelFamily::Logistic;
  bool ok = true;
  std::string detail;
  for (auto kind :
       {ConstraintKind::DemographicParity, ConstraintKind::EqualTPR, ConstraintKind::EqualizedOdds}) {
    const FairnessConstraint c{kind, 0.01};
    const auto r = fit_reduction(logit, sample, c, 50, 608);
    std::vector<double> d;
    for (const auto& rec : sample.records()) d.push_back(decision_probability(r.scorer, rec));
    const double disparity = disparity_from_decisions(d, sample, kDefaultTau).gap(kind, true);
    const double bound = 2 * (c.epsilon + r.gap);
    ok = ok && disparity <= bound;
    detail += (detail.empty() ? "" : "; ") + to_string(kind) + " disparity " + num(disparity) +
              " bound " + num(bound);
  }
  return {ok, detail};
}

std::map<std::string, std::string> csv_files(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file() || e.path().extension() != ".csv") continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    out[fs::relative(e.path(), root).generic_string()] = s.str();
  }
  return out;
}

Outcome determinism(const fs::path& first, const fs::path& out) {
  std::size_t files = 0;
  std::string differing;
  for (const auto& name : kSuiteNames) {
    run_suite(name, out / name);
    const auto a = csv_files(first / name), b = csv_files(out / name);
    files += a.size();
    if (a != b || a.empty()) differing += (differing.empty() ? "" : ", ") + name;
  }
  return {differing.empty(), std::to_string(files) + " CSV files compared" +
                                 (differing.empty() ? "" : "; differing suites: " + differing)};
}

Outcome numerical_checks() {
  Rng rng(derive_seed(8, 0));
  double worst_rel = 0;
  for (int inst = 0; inst < 50; ++inst) {
    TrainingData d;
    d.n_features = 1 + rng.below(4);
    const auto n = 5 + rng.below(30);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t f = 0; f < d.n_features; ++f) d.x.push_back(rng.normal(0, 2));
      d.y.push_back(rng.bernoulli(0.5) ? 1.0 : 0.0);
      d.w.push_back(rng.uniform(0.1, 5.0));
      d.bucket.push_back(1);
    }
    std::vector<double> beta(d.n_features + 1);
    for (auto& b : beta) b = rng.normal();
    const double l2 = rng.uniform(0, 0.1);
    const auto g = detail::logistic_gradient(d, beta, l2);
    for (std::size_t k = 0; k < beta.size(); ++k) {
      const double h = 1e-5;
      auto up = beta, down = beta;
      up[k] += h;
      down[k] -= h;
      const double fd = (detail::logistic_objective(d, up, l2) - detail::logistic_objective(d, down, l2)) /
                        (2 * h);
      worst_rel = std::max(worst_rel, std::abs(fd - g[k]) / std::max(std::abs(g[k]), 1e-3));
    }
  }

  // Integer weights against physically repeated rows.
  double worst_coef = 0;
  for (int inst = 0; inst < 10; ++inst) {
    std::vector<TaxpayerRecord> weighted, repeated;
    for (int i = 0; i < 80; ++i) {
      TaxpayerRecord r;
      r.features = {rng.normal(), rng.normal(), rng.normal()};
      const double m = r.features[0] - 0.5 * r.features[1] + 0.3 * r.features[2];
      r.misreport = rng.bernoulli(1 / (1 + std::exp(-m))) ? 1000.0 : 0.0;
      r.bucket = 1;
      const int w = 1 + static_cast<int>(rng.below(4));
      for (int k = 0; k < w; ++k) {
        r.id = static_cast<std::int64_t>(repeated.size());
        repeated.push_back(r);
      }
      r.id = i;
      r.weight = w;
      weighted.push_back(r);
    }
    ModelSpec s;
    s.family = ModelFamily::Logistic;
    const auto cw = detail::logistic_coefficients(
        fit_scorer(s, Population(weighted, 1), TargetKind::classification()));
    const auto cr = detail::logistic_coefficients(
        fit_scorer(s, Population(repeated, 1), TargetKind::classification()));
    for (std::size_t k = 0; k < cw.size(); ++k) worst_coef = std::max(worst_coef, std::abs(cw[k] - cr[k]));
  }
  return {worst_rel <= 1e-5 && worst_coef <= 1e-6,
          "max gradient relative error " + num(worst_rel) + "; max weighted/repeated coefficient gap " +
              num(worst_coef)};
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path out = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "auditalloc_acceptance";
  fs::remove_all(out);
  const fs::path first = out / "first", second = out / "second";

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"1 solver-oracle equivalence",
       [&] { return suite_outcome("solver-oracle", first / "solver-oracle", 60); }},
      {"2 budget exactness", budget_exactness},
      {"3 lemma identities",
       [&] { return suite_outcome("lemma-properties", first / "lemma-properties", 1e9); }},
      {"4 oracle sanity", oracle_sanity},
      {"5 qualitative replication",
       [&] { return suite_outcome("paper-qualitative", first / "paper-qualitative", 600); }},
      {"6 in-processing guarantee", reduction_guarantee},
      {"7 determinism",
       [&] {
         run_suite("threshold-sweep", first / "threshold-sweep");
         return determinism(first, second);
       }},
      {"8 numerical checks", numerical_checks},
  };

  int failed = 0;
  for (const auto& [name, run] : criteria) {
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << name << ": " << o.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
