#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "auditalloc/experiment.hpp"
#include "doctest.h"

using namespace auditalloc;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("auditalloc_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

ExperimentConfig small_config(std::uint64_t seed = 3) {
  ExperimentConfig c;
  PopulationConfig p;
  p.n_records = 4000;
  c.population.generate = p;
  c.seed = seed;
  ModelSpec logit;
  logit.family = ModelFamily::Logistic;
  ModelSpec gb;
  gb.family = ModelFamily::GradientBoost;
  gb.hyperparameters["n_rounds"] = 20;
  c.models.push_back({"Logit", logit, TargetKind::classification(), {}});
  c.models.push_back({"GB-reg", gb, TargetKind::regression(), {}});
  FairnessOption mono;
  mono.kind = FairnessOption::Kind::Monotone;
  c.models.push_back({"GB-reg-mono", gb, TargetKind::regression(), mono});
  FairnessOption post;
  post.kind = FairnessOption::Kind::Postprocess;
  post.constraint = {ConstraintKind::EqualTPR, 0.05};
  c.models.push_back({"Logit-post", logit, TargetKind::classification(), post});
  return c;
}

ExperimentConfig reparse(const std::string& text) {
  return nlohmann::json::parse(text).get<ExperimentConfig>();
}

}  // namespace

TEST_CASE("config validation rejects bad configs before fitting") {
  const nlohmann::json good = small_config();
  CHECK_NOTHROW(good.get<ExperimentConfig>());

  auto bad = [&](auto mutate) {
    nlohmann::json j = good;
    mutate(j);
    CHECK_THROWS_AS(j.get<ExperimentConfig>(), ConfigError);
  };
  bad([](auto& j) { j["surprise"] = 1; });
  bad([](auto& j) { j["population"]["load"] = "x.csv"; });
  bad([](auto& j) { j["population"].erase("generate"); });
  bad([](auto& j) { j["test_fraction"] = 1.0; });
  bad([](auto& j) { j["test_fraction"] = 0.0; });
  bad([](auto& j) { j["winsorize"] = {0.99, 0.01}; });
  bad([](auto& j) { j["budget"] = {{"kind", "dollar"}, {"dollars", 1e6}}; });  // monotone row
  bad([](auto& j) { j["budget"] = {{"kind", "rate"}, {"k", 0.0}}; });
  bad([](auto& j) { j["budget"] = {{"kind", "rate"}, {"dollars", 5}}; });
  bad([](auto& j) { j["budget"] = {{"kind", "both"}}; });
  bad([](auto& j) { j["models"][1]["label"] = "Logit"; });
  bad([](auto& j) { j["models"][0]["label"] = "Oracle"; });
  bad([](auto& j) { j["models"][0]["label"] = "a,b"; });
  bad([](auto& j) { j["models"][0]["model"]["family"] = "Perceptron"; });
  bad([](auto& j) { j["models"][0]["fairness"]["kind"] = "magic"; });
  bad([](auto& j) { j["models"][0]["fairness"]["colour"] = "red"; });
  bad([](auto& j) {
    j["models"][1]["fairness"] = {{"kind", "reduction"}, {"constraint", "DemographicParity"}};
  });
  bad([](auto& j) { j["models"][0]["target"] = {{"kind", "regression"}}; });  // logistic
  bad([](auto& j) { j["seed"] = "zero"; });
  bad([](auto& j) { j["population"]["generate"]["n_records"] = 0; });

  SUBCASE("monotone with a dollar budget is fine once the monotone row is gone") {
    nlohmann::json j = good;
    j["budget"] = {{"kind", "dollar"}, {"dollars", 1e6}};
    j["models"].erase(2);
    CHECK_NOTHROW(j.get<ExperimentConfig>());
  }
}

TEST_CASE("config JSON round trip and hash sensitivity") {
  const auto c = small_config();
  const auto text = canonical_config(c);
  CHECK(canonical_config(reparse(text)) == text);
  CHECK(config_hash(reparse(text)) == config_hash(c));

  // Spelled-out defaults hash the same as implicit ones.
  auto explicit_defaults = c;
  explicit_defaults.models[0].spec.hyperparameters = ModelSpec::defaults(ModelFamily::Logistic);
  CHECK(config_hash(explicit_defaults) == config_hash(c));

  std::vector<ExperimentConfig> variants(12, c);
  variants[0].seed = 4;
  variants[1].tau = 1000;
  variants[2].test_fraction = 0.3;
  variants[3].winsorize.reset();
  variants[4].budget = RateBudget{0.01};
  variants[5].models[0].label = "Logit2";
  variants[6].models[1].spec.hyperparameters["n_rounds"] = 21;
  variants[7].models[3].fairness.constraint.epsilon = 0.04;
  variants[8].population.generate->n_records = 4001;
  variants[9].population.n_buckets = 5;
  variants[10].output_dir = "/tmp/elsewhere";
  variants[11].models.pop_back();
  std::set<std::uint64_t> hashes{config_hash(c)};
  for (const auto& v : variants) hashes.insert(config_hash(v));
  CHECK(hashes.size() == variants.size() + 1);
}

TEST_CASE("oracle row under a rate budget") {
  ExperimentConfig c;
  PopulationConfig p;
  p.n_records = 3000;
  c.population.generate = p;
  const auto r = run_experiment(c);
  REQUIRE(r.models.size() == 1);
  const auto& m = r.at("Oracle").metrics;
  CHECK(m.oracle_overlap == doctest::Approx(1.0));
  REQUIRE(m.no_change_rate.has_value());
  CHECK(*m.no_change_rate == 0.0);
  CHECK_THROWS_AS(r.at("nope"), ConfigError);
}

TEST_CASE("experiment run: ordering, monotone rates and warnings") {
  const auto r = run_experiment(small_config());
  REQUIRE(r.models.size() == 5);
  CHECK(r.models[0].label == "Oracle");
  for (const auto& m : r.models) {
    CHECK(r.at("Oracle").metrics.revenue >= m.metrics.revenue - 1e-6);
    CHECK(m.metrics.tau == 200);
    CHECK(m.full_disparity.has_value() == (m.label != "Oracle"));
  }
  CHECK(check_monotone(
      std::span<const std::optional<double>>(r.at("GB-reg-mono").metrics.audit_rate_by_bucket),
      1e-9));
  CHECK(r.warnings.empty());

  auto c = small_config();
  FairnessOption red;
  red.kind = FairnessOption::Kind::Reduction;
  red.max_iters = 1;
  red.subsample = 1500;
  red.constraint = {ConstraintKind::DemographicParity, 0.0};
  c.models = {{"Logit-red", c.models[0].spec, TargetKind::classification(), red}};
  const auto rr = run_experiment(c);
  REQUIRE(rr.warnings.size() == 1);
  CHECK(rr.warnings[0].rfind("Logit-red: reduction stopped", 0) == 0);
}

TEST_CASE("dollar budget run spends within budget and leaves overlap undefined") {
  auto c = small_config();
  c.models.erase(c.models.begin() + 2);
  c.budget = DollarBudget{2e6};
  const auto r = run_experiment(c);
  for (const auto& m : r.models) {
    CHECK_FALSE(m.metrics.oracle_overlap.has_value());
    CHECK(m.allocation.spent <= 2e6 * (1 + 1e-9));
  }
}

TEST_CASE("artifacts are byte-identical across reruns and re-parse") {
  const auto c = small_config();
  const auto a = scratch_dir("rerun_a"), b = scratch_dir("rerun_b");
  write_artifacts(run_experiment(c), c, a);
  const auto r = run_experiment(c);
  write_artifacts(r, c, b);
  for (const char* f :
       {"metrics.csv", "audit_rate_by_bucket.csv", "disparity.csv", "allocation.csv", "manifest.json"})
    CHECK_MESSAGE(slurp(a / f) == slurp(b / f), f);

  {
    std::ifstream in(a / "metrics.csv");
    const auto m = read_metrics(in);
    REQUIRE(m.size() == r.models.size());
    for (std::size_t i = 0; i < m.size(); ++i) {
      CHECK(m[i].label == r.models[i].label);
      CHECK(m[i].revenue == r.models[i].metrics.revenue);
      CHECK(m[i].oracle_overlap == r.models[i].metrics.oracle_overlap);
    }
  }
  {
    std::ifstream in(a / "audit_rate_by_bucket.csv");
    const auto rows = read_rate_table(in);
    CHECK(rows.size() == r.models.size() * 10);
    std::ostringstream again;
    write_rate_table(r, again);
    CHECK(again.str() == slurp(a / "audit_rate_by_bucket.csv"));
    for (const auto& row : rows) {
      const auto& mine = r.at(row.model).metrics.audit_rate_by_bucket[row.bucket - 1];
      CHECK(row.rate == mine);
      CHECK(row.oracle_rate == r.at("Oracle").metrics.audit_rate_by_bucket[row.bucket - 1]);
    }
  }
  {
    std::ifstream in(a / "disparity.csv");
    const auto rows = read_disparity_table(in);
    // Oracle: allocation scope only; every other model adds the full scope.
    CHECK(rows.size() == 10 + (r.models.size() - 1) * 20);
    const auto& first = r.at("Logit").full_disparity->buckets[0];
    const auto it = std::find_if(rows.begin(), rows.end(), [](const DisparityRow& d) {
      return d.model == "Logit" && d.scope == "full" && d.rates.bucket == 1;
    });
    REQUIRE(it != rows.end());
    CHECK(it->rates.tpr == first.tpr);
    CHECK(it->rates.fpr_w == first.fpr_w);
  }
  {
    std::ifstream in(a / "allocation.csv");
    const auto rows = read_allocation_table(in);
    CHECK(rows.size() == r.models.size() * r.test.size());
    CHECK(rows[7].id == r.models[0].allocation.ids[7]);
    CHECK(rows[7].alpha == r.models[0].allocation.alpha[7]);
  }
  const auto manifest = nlohmann::json::parse(slurp(a / "manifest.json"));
  CHECK(manifest["seed"] == 3);
  CHECK(manifest["config_hash"].get<std::string>().size() == 16);
  CHECK(reparse(manifest["config"].dump()).seed == 3);
}

TEST_CASE("different seeds give different allocations") {
  const auto a = run_experiment(small_config(3));
  const auto b = run_experiment(small_config(4));
  CHECK(a.at("Logit").metrics.revenue != b.at("Logit").metrics.revenue);
}

TEST_CASE("loading a population from CSV via a config file") {
  const auto dir = scratch_dir("load");
  PopulationConfig p;
  p.n_records = 2000;
  save_population(generate_population(p), dir / "pop.csv");
  {
    std::ofstream f(dir / "config.json");
    f << R"({"population": {"load": "pop.csv", "n_buckets": 5},
             "models": [{"label": "LDA", "model": {"family": "LinearDiscriminant"}}],
             "seed": 1})";
  }
  const auto c = load_config(dir / "config.json");
  REQUIRE(c.population.load.has_value());
  CHECK(*c.population.load == dir / "pop.csv");
  const auto r = run_experiment(c);
  CHECK(r.at("LDA").metrics.audit_rate_by_bucket.size() == 5);
  CHECK(r.test.size() == 500);

  {
    std::ofstream f(dir / "broken.json");
    f << "{not json";
  }
  CHECK_THROWS_AS(load_config(dir / "broken.json"), ConfigError);
  CHECK_THROWS_AS(load_config(dir / "missing.json"), ConfigError);
}

TEST_CASE("suites write summaries that re-parse") {
  const auto dir = scratch_dir("suites");
  for (const std::string name : {"solver-oracle", "lemma-properties"}) {
    const auto r = run_suite(name, dir / name);
    CHECK_MESSAGE(r.passed(), name);
    std::ifstream in(dir / name / "summary.csv");
    const auto back = read_summary(in);
    CHECK(back.name == name);
    REQUIRE(back.checks.size() == r.checks.size());
    for (std::size_t i = 0; i < r.checks.size(); ++i) {
      CHECK(back.checks[i].criterion == r.checks[i].criterion);
      CHECK(back.checks[i].detail == r.checks[i].detail);
      CHECK(back.checks[i].pass == r.checks[i].pass);
    }
  }
  SuiteOptions small;
  small.seeds = {0};
  small.n_records = 8000;
  CHECK(run_suite("threshold-sweep", dir / "sweep", small).passed());
  CHECK_THROWS_AS(run_suite("nonsense", dir / "x"), ConfigError);
  small.seeds.clear();
  CHECK_THROWS_AS(run_suite("lemma-properties", dir / "x", small), ConfigError);

  std::istringstream bad("suite,criterion,detail,pass\ns,c,d,maybe\n");
  CHECK_THROWS_AS(read_summary(bad), ParseError);
}
