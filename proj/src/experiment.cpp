#include "auditalloc/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "auditalloc/csv.hpp"
#include "auditalloc/oracles.hpp"

namespace auditalloc {

namespace {

constexpr const char* kOracleLabel = "Oracle";
constexpr std::uint64_t kSplitStream = 1;
constexpr std::uint64_t kModelSeedStream = 2;
constexpr std::uint64_t kFairnessStream = 3;

const char* fairness_name(FairnessOption::Kind k) {
  switch (k) {
    case FairnessOption::Kind::None: return "none";
    case FairnessOption::Kind::Reduction: return "reduction";
    case FairnessOption::Kind::Postprocess: return "postprocess";
    case FairnessOption::Kind::Monotone: return "monotone";
  }
  return "none";
}

FairnessOption::Kind parse_fairness(const std::string& s) {
  for (auto k : {FairnessOption::Kind::None, FairnessOption::Kind::Reduction,
                 FairnessOption::Kind::Postprocess, FairnessOption::Kind::Monotone})
    if (s == fairness_name(k)) return k;
  throw ConfigError("unknown fairness option \"" + s + "\"");
}

void require_keys(const nlohmann::json& j, std::initializer_list<const char*> known,
                  const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, _] : j.items())
    if (std::none_of(known.begin(), known.end(), [&](const char* k) { return key == k; }))
      throw ConfigError("unknown key \"" + key + "\" in " + where);
}

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw Error("cannot write " + p.string());
  return f;
}

std::string hex64(std::uint64_t x) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, x >>= 4) s[i] = digits[x & 15];
  return s;
}

bool is_rate(const BudgetSpec& b) { return std::holds_alternative<RateBudget>(b); }

// Decisions a model's scores induce on the full test set: the randomized
// decision probability for fairness wrappers, 1[score >= 0.5] for other
// classifiers and 1[predicted misreport > tau] for regressors.
std::vector<double> full_decisions(const Scorer& s, const Population& pop, double tau,
                                   bool randomized) {
  std::vector<double> a(pop.size());
  for (std::size_t i = 0; i < pop.size(); ++i) {
    const auto& r = pop[i];
    if (randomized) a[i] = decision_probability(s, r);
    else if (s.target().is_classification()) a[i] = s.score(r) >= 0.5 ? 1.0 : 0.0;
    else a[i] = misreport_flag(s.score(r), tau) ? 1.0 : 0.0;
  }
  return a;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

void ExperimentConfig::validate() const {
  if (population.generate.has_value() == population.load.has_value())
    throw ConfigError("population needs exactly one of generate / load");
  if (population.generate) population.generate->validate();
  if (population.n_buckets < 1) throw ConfigError("n_buckets must be at least 1");
  if (!std::isfinite(tau)) throw ConfigError("tau must be finite");
  if (!(test_fraction > 0 && test_fraction < 1)) throw ConfigError("test_fraction must lie in (0, 1)");
  if (winsorize) {
    const auto [lo, hi] = *winsorize;
    if (!(lo >= 0 && lo < hi && hi <= 1)) throw ConfigError("winsorize needs 0 <= lower < upper <= 1");
  }
  if (const auto* r = std::get_if<RateBudget>(&budget)) {
    if (!(r->k > 0 && r->k <= 1)) throw ConfigError("rate budget k must lie in (0, 1]");
  } else if (!(std::get<DollarBudget>(budget).dollars > 0) ||
             !std::isfinite(std::get<DollarBudget>(budget).dollars)) {
    throw ConfigError("dollar budget must be positive and finite");
  }
  std::set<std::string> labels{kOracleLabel};
  for (const auto& m : models) {
    if (m.label.empty() || m.label.find_first_of(",\n\r\"") != std::string::npos)
      throw ConfigError("model label \"" + m.label + "\" must be nonempty without commas or quotes");
    if (!labels.insert(m.label).second)
      throw ConfigError("duplicate or reserved model label \"" + m.label + "\"");
    m.spec.validate();
    m.fairness.constraint.validate();
    using K = FairnessOption::Kind;
    if (m.fairness.kind == K::Monotone && !is_rate(budget))
      throw ConfigError(m.label + ": the monotone allocation needs a rate budget");
    if ((m.fairness.kind == K::Reduction || m.fairness.kind == K::Postprocess) &&
        !m.target.is_classification())
      throw ConfigError(m.label + ": fairness wrappers need a classification target");
    if (m.fairness.kind == K::Reduction && (m.fairness.max_iters < 1 || m.fairness.subsample < 0))
      throw ConfigError(m.label + ": reduction needs max_iters >= 1 and subsample >= 0");
    if ((m.spec.family == ModelFamily::LinearDiscriminant ||
         m.spec.family == ModelFamily::Logistic) &&
        !m.target.is_classification())
      throw ConfigError(m.label + ": " + to_string(m.spec.family) +
                        " supports classification targets only");
  }
}

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  nlohmann::json pop;
  if (c.population.generate) pop["generate"] = *c.population.generate;
  if (c.population.load) pop["load"] = c.population.load->generic_string();
  pop["n_buckets"] = c.population.n_buckets;

  nlohmann::json models = nlohmann::json::array();
  for (const auto& m : c.models) {
    nlohmann::json f = {{"kind", fairness_name(m.fairness.kind)}};
    if (m.fairness.kind == FairnessOption::Kind::Reduction ||
        m.fairness.kind == FairnessOption::Kind::Postprocess) {
      f["constraint"] = to_string(m.fairness.constraint.kind);
      f["epsilon"] = m.fairness.constraint.epsilon;
    }
    if (m.fairness.kind == FairnessOption::Kind::Reduction) {
      f["max_iters"] = m.fairness.max_iters;
      f["subsample"] = m.fairness.subsample;
    }
    nlohmann::json spec = m.spec;
    // Spell out defaults so the hash covers the effective configuration.
    for (const auto& [k, v] : ModelSpec::defaults(m.spec.family))
      if (!spec["hyperparameters"].contains(k)) spec["hyperparameters"][k] = v;
    const auto mode = m.spec.effective_fit_mode();
    spec["fit_mode"] = mode.kind == FitMode::Kind::Subsample
                           ? nlohmann::json{{"kind", "subsample"}, {"n", mode.n}}
                           : nlohmann::json{{"kind", "native"}};
    models.push_back({{"label", m.label}, {"model", spec}, {"target", m.target}, {"fairness", f}});
  }

  nlohmann::json budget;
  if (const auto* r = std::get_if<RateBudget>(&c.budget))
    budget = {{"kind", "rate"}, {"k", r->k}};
  else
    budget = {{"kind", "dollar"}, {"dollars", std::get<DollarBudget>(c.budget).dollars}};

  j = {{"population", pop},
       {"tau", c.tau},
       {"test_fraction", c.test_fraction},
       {"winsorize", c.winsorize ? nlohmann::json{c.winsorize->first, c.winsorize->second}
                                 : nlohmann::json()},
       {"models", models},
       {"budget", budget},
       {"seed", c.seed}};
  if (c.output_dir) j["output_dir"] = c.output_dir->generic_string();
}

void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  try {
    require_keys(j, {"population", "tau", "test_fraction", "winsorize", "models", "budget", "seed",
                     "output_dir"},
                 "experiment config");
    c = ExperimentConfig{};
    const auto& p = j.at("population");
    require_keys(p, {"generate", "load", "n_buckets"}, "population");
    if (p.contains("generate")) c.population.generate = p.at("generate").get<PopulationConfig>();
    if (p.contains("load")) c.population.load = p.at("load").get<std::string>();
    c.population.n_buckets = p.value("n_buckets", kDeciles);
    c.tau = j.value("tau", kDefaultTau);
    c.test_fraction = j.value("test_fraction", 0.25);
    if (j.contains("winsorize")) {
      const auto& w = j.at("winsorize");
      if (w.is_null()) c.winsorize.reset();
      else if (w.is_array() && w.size() == 2) c.winsorize = std::pair{w[0].get<double>(), w[1].get<double>()};
      else throw ConfigError("winsorize must be [lower, upper] or null");
    }
    if (j.contains("models")) {
      for (const auto& jm : j.at("models")) {
        require_keys(jm, {"label", "model", "target", "fairness"}, "model entry");
        ModelRun m;
        m.label = jm.at("label").get<std::string>();
        m.spec = jm.at("model").get<ModelSpec>();
        if (jm.contains("target")) m.target = jm.at("target").get<TargetKind>();
        if (jm.contains("fairness")) {
          const auto& f = jm.at("fairness");
          require_keys(f, {"kind", "constraint", "epsilon", "max_iters", "subsample"}, "fairness");
          m.fairness.kind = parse_fairness(f.at("kind").get<std::string>());
          if (f.contains("constraint"))
            m.fairness.constraint.kind = parse_constraint(f.at("constraint").get<std::string>());
          m.fairness.constraint.epsilon = f.value("epsilon", 0.01);
          m.fairness.max_iters = f.value("max_iters", 50);
          m.fairness.subsample = f.value("subsample", std::int64_t{10'000});
        }
        c.models.push_back(std::move(m));
      }
    }
    if (j.contains("budget")) {
      const auto& b = j.at("budget");
      require_keys(b, {"kind", "k", "dollars"}, "budget");
      const auto kind = b.at("kind").get<std::string>();
      if (kind == "rate") {
        if (b.contains("dollars")) throw ConfigError("a rate budget takes k, not dollars");
        c.budget = RateBudget{b.value("k", kDefaultAuditRate)};
      } else if (kind == "dollar") {
        if (b.contains("k")) throw ConfigError("a dollar budget takes dollars, not k");
        c.budget = DollarBudget{b.value("dollars", kDefaultDollarBudget)};
      } else {
        throw ConfigError("unknown budget kind \"" + kind + "\"");
      }
    }
    c.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  c.validate();
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  auto c = j.get<ExperimentConfig>();
  if (c.population.load && c.population.load->is_relative())
    c.population.load = path.parent_path() / *c.population.load;
  return c;
}

std::string canonical_config(const ExperimentConfig& c) {
  return nlohmann::json(c).dump();
}

std::uint64_t config_hash(const ExperimentConfig& c) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : canonical_config(c)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

ExperimentConfig default_experiment_config(std::uint64_t seed, std::int64_t n_records) {
  ExperimentConfig c;
  PopulationConfig p;
  p.n_records = n_records;
  c.population.generate = p;
  c.seed = seed;
  ModelSpec gb;
  gb.family = ModelFamily::GradientBoost;
  c.models.push_back({"GB-classification", gb, TargetKind::classification(), {}});
  c.models.push_back({"GB-regression", gb, TargetKind::regression(), {}});
  FairnessOption mono;
  mono.kind = FairnessOption::Kind::Monotone;
  c.models.push_back({"GB-regression-monotone", gb, TargetKind::regression(), mono});
  return c;
}

// ---------------------------------------------------------------------------
// Run

const ModelResult& ExperimentResult::at(const std::string& label) const {
  for (const auto& m : models)
    if (m.label == label) return m;
  throw ConfigError("no model labelled \"" + label + "\"");
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  config.validate();
  ExperimentResult res;
  res.config_hash = config_hash(config);

  Population pop;
  if (config.population.generate) {
    auto g = *config.population.generate;
    g.seed = derive_seed(config.seed, g.seed);
    pop = generate_population(g);
    if (config.population.n_buckets != kDeciles) pop = assign_buckets(pop, config.population.n_buckets);
  } else {
    pop = assign_buckets(load_population(*config.population.load), config.population.n_buckets);
  }
  auto parts = split(pop, config.test_fraction, derive_seed(config.seed, kSplitStream));
  const Population& train = parts.train;
  res.test = parts.test;
  const Population& test = res.test;

  // Allocation sees costs estimated from training-set cell means; metrics
  // use the realized costs.
  const auto cost_model = build_cost_model(train, train.costs());
  const Population test_est = test.with_costs(estimate_costs(test, cost_model));

  auto allocate = [&](const ScoreVector& s, bool monotone) {
    if (const auto* r = std::get_if<RateBudget>(&config.budget))
      return monotone ? monotone_allocation(s, test, *r) : topk_allocation(s, test, *r);
    auto a = roi_allocation(s, test_est, std::get<DollarBudget>(config.budget));
    return a;
  };
  auto finish = [&](const std::string& label, Allocation alloc,
                    std::optional<DisparityReport> full) {
    ModelResult m;
    m.label = label;
    m.metrics = evaluate(label, alloc, test, config.tau);
    m.allocation_disparity = constraint_disparity(alloc, test, config.tau);
    m.full_disparity = std::move(full);
    m.allocation = std::move(alloc);
    res.models.push_back(std::move(m));
  };

  const auto oracle_scores = oracle_scorer(test);
  finish(kOracleLabel,
         is_rate(config.budget) ? oracle_allocation(test, std::get<RateBudget>(config.budget))
                                : allocate(oracle_scores, false),
         std::nullopt);

  const Population train_w =
      config.winsorize ? winsorize_misreports(train, config.winsorize->first, config.winsorize->second)
                       : train;
  // Identical (spec, target) pairs are fitted once.
  std::map<std::string, Scorer> fitted;
  for (const auto& run : config.models) {
    ModelSpec spec = run.spec;
    spec.seed = derive_seed(derive_seed(config.seed, kModelSeedStream), run.spec.seed);
    const std::uint64_t fair_seed = derive_seed(spec.seed, kFairnessStream);
    const auto& fit_pop = run.target.is_classification() ? train : train_w;
    auto plain = [&]() {
      nlohmann::json key = {{"spec", spec}, {"target", run.target}};
      const auto k = key.dump();
      auto it = fitted.find(k);
      if (it == fitted.end()) it = fitted.emplace(k, fit_scorer(spec, fit_pop, run.target)).first;
      return it->second;
    };

    Scorer scorer;
    bool randomized = false;
    switch (run.fairness.kind) {
      case FairnessOption::Kind::None:
      case FairnessOption::Kind::Monotone:
        scorer = plain();
        break;
      case FairnessOption::Kind::Postprocess:
        scorer = postprocess_thresholds(plain(), train, run.fairness.constraint, fair_seed, config.tau);
        randomized = true;
        break;
      case FairnessOption::Kind::Reduction: {
        const auto n = run.fairness.subsample;
        const Population fit_on =
            n > 0 ? weighted_subsample(train, n, derive_seed(fair_seed, 1)).population : train;
        ReductionOptions opt;
        opt.tau = config.tau;
        const auto r = fit_reduction(spec, fit_on, run.fairness.constraint, run.fairness.max_iters,
                                     fair_seed, opt);
        if (!r.converged) {
          std::ostringstream w;
          w << run.label << ": reduction stopped after " << r.iterations
            << " iterations with duality gap " << csv::format_double(r.gap);
          res.warnings.push_back(w.str());
        }
        scorer = r.scorer;
        randomized = true;
        break;
      }
    }
    const auto scores = score(scorer, test);
    finish(run.label, allocate(scores, run.fairness.kind == FairnessOption::Kind::Monotone),
           disparity_from_decisions(full_decisions(scorer, test, config.tau, randomized), test,
                                    config.tau));
  }
  return res;
}

// ---------------------------------------------------------------------------
// Artifacts

void write_rate_table(const ExperimentResult& r, std::ostream& out) {
  const auto& oracle = r.at(kOracleLabel).metrics.audit_rate_by_bucket;
  out << "model,bucket,rate,oracle_rate\n";
  for (const auto& m : r.models)
    for (std::size_t b = 0; b < m.metrics.audit_rate_by_bucket.size(); ++b)
      out << m.label << ',' << b + 1 << ',' << csv::format_optional(m.metrics.audit_rate_by_bucket[b])
          << ',' << csv::format_optional(oracle[b]) << '\n';
}

std::vector<RateRow> read_rate_table(std::istream& in) {
  const auto t = csv::read_table(in);
  std::vector<RateRow> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i)
    out.push_back({t.text(i, "model"), static_cast<int>(t.number(i, "bucket")),
                   t.optional_number(i, "rate"), t.optional_number(i, "oracle_rate")});
  return out;
}

void write_disparity_table(const ExperimentResult& r, std::ostream& out) {
  out << "model,scope,bucket,selection_rate,tpr,fpr,selection_rate_w,tpr_w,fpr_w\n";
  auto rows = [&](const std::string& model, const char* scope, const DisparityReport& rep) {
    for (const auto& b : rep.buckets)
      out << model << ',' << scope << ',' << b.bucket << ','
          << csv::format_optional(b.selection_rate) << ',' << csv::format_optional(b.tpr) << ','
          << csv::format_optional(b.fpr) << ',' << csv::format_optional(b.selection_rate_w) << ','
          << csv::format_optional(b.tpr_w) << ',' << csv::format_optional(b.fpr_w) << '\n';
  };
  for (const auto& m : r.models) {
    rows(m.label, "allocation", m.allocation_disparity);
    if (m.full_disparity) rows(m.label, "full", *m.full_disparity);
  }
}

std::vector<DisparityRow> read_disparity_table(std::istream& in) {
  const auto t = csv::read_table(in);
  std::vector<DisparityRow> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    DisparityRow d;
    d.model = t.text(i, "model");
    d.scope = t.text(i, "scope");
    if (d.scope != "allocation" && d.scope != "full")
      throw ParseError(i + 1, "scope", "expected allocation or full");
    d.rates = {static_cast<int>(t.number(i, "bucket")), t.optional_number(i, "selection_rate"),
               t.optional_number(i, "tpr"),           t.optional_number(i, "fpr"),
               t.optional_number(i, "selection_rate_w"), t.optional_number(i, "tpr_w"),
               t.optional_number(i, "fpr_w")};
    out.push_back(std::move(d));
  }
  return out;
}

void write_allocation_table(const ExperimentResult& r, std::ostream& out) {
  out << "model,id,alpha\n";
  for (const auto& m : r.models)
    for (std::size_t i = 0; i < m.allocation.size(); ++i)
      out << m.label << ',' << m.allocation.ids[i] << ',' << csv::format_double(m.allocation.alpha[i])
          << '\n';
}

std::vector<AllocationRow> read_allocation_table(std::istream& in) {
  const auto t = csv::read_table(in);
  std::vector<AllocationRow> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const double id = t.number(i, "id");
    if (id != std::floor(id)) throw ParseError(i + 1, "id", "not an integer");
    out.push_back({t.text(i, "model"), static_cast<std::int64_t>(id), t.number(i, "alpha")});
  }
  return out;
}

void write_artifacts(const ExperimentResult& r, const ExperimentConfig& config,
                     const std::filesystem::path& out) {
  std::filesystem::create_directories(out);
  {
    std::vector<MetricsReport> reports;
    for (const auto& m : r.models) reports.push_back(m.metrics);
    auto f = open_out(out / "metrics.csv");
    write_metrics(reports, f);
  }
  {
    auto f = open_out(out / "audit_rate_by_bucket.csv");
    write_rate_table(r, f);
  }
  {
    auto f = open_out(out / "disparity.csv");
    write_disparity_table(r, f);
  }
  {
    auto f = open_out(out / "allocation.csv");
    write_allocation_table(r, f);
  }
  nlohmann::json manifest = {
      {"format", "auditalloc.manifest"},
      {"version", 1},
      {"config", nlohmann::json::parse(canonical_config(config))},
      {"config_hash", hex64(r.config_hash)},
      {"seed", config.seed},
      {"warnings", r.warnings},
      {"files", {"metrics.csv", "audit_rate_by_bucket.csv", "disparity.csv", "allocation.csv"}}};
  auto f = open_out(out / "manifest.json");
  f << manifest.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Suites

bool SuiteResult::passed() const {
  return !checks.empty() &&
         std::all_of(checks.begin(), checks.end(), [](const SuiteCheck& c) { return c.pass; });
}

void write_summary(const SuiteResult& r, std::ostream& out) {
  out << "suite,criterion,detail,pass\n";
  for (const auto& c : r.checks) {
    if (c.detail.find(',') != std::string::npos || c.criterion.find(',') != std::string::npos)
      throw Error("summary fields must not contain commas");
    out << r.name << ',' << c.criterion << ',' << c.detail << ',' << (c.pass ? "true" : "false")
        << '\n';
  }
}

SuiteResult read_summary(std::istream& in) {
  const auto t = csv::read_table(in);
  SuiteResult r;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    if (i == 0) r.name = t.text(i, "suite");
    const auto& p = t.text(i, "pass");
    if (p != "true" && p != "false") throw ParseError(i + 1, "pass", "expected true or false");
    r.checks.push_back({t.text(i, "criterion"), t.text(i, "detail"), p == "true"});
  }
  return r;
}

namespace {

std::string fmt(double x) { return csv::format_double(x); }

Population instance_population(Rng& rng, std::size_t n, int buckets) {
  std::vector<TaxpayerRecord> recs(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& r = recs[i];
    r.id = static_cast<std::int64_t>(i);
    r.weight = rng.uniform(0.5, 5.0);
    r.cost = rng.uniform(1.0, 50.0);
    // Every bucket gets at least one record.
    r.bucket = i < static_cast<std::size_t>(buckets) ? static_cast<int>(i) + 1
                                                     : 1 + static_cast<int>(rng.below(buckets));
  }
  return Population(std::move(recs), buckets);
}

void suite_solver_oracle(SuiteResult& res, const std::filesystem::path& out, std::uint64_t seed) {
  auto f = open_out(out / "instances.csv");
  f << "kind,instance,n,value,optimum,abs_error,pass\n";
  Rng rng(derive_seed(seed, 101));
  int mono_pass = 0, roi_pass = 0;
  for (int k = 0; k < 100; ++k) {
    const auto n = 3 + static_cast<std::size_t>(rng.below(28));
    const auto pop = instance_population(rng, n, 3);
    ScoreVector s{pop.ids(), {}};
    for (std::size_t i = 0; i < n; ++i) s.scores.push_back(rng.normal(1.0, 2.0));
    const RateBudget b{rng.uniform(0.05, 0.95)};
    // The monotone objective counts only positive scores.
    ScoreVector floored = s;
    for (auto& x : floored.scores) x = std::max(x, 0.0);
    const double v = allocation_value(monotone_allocation(s, pop, b), floored, pop);
    const double o = oracles::monotone_optimum(s, pop, b);
    const bool ok = std::abs(v - o) <= 1e-6 * std::max(1.0, std::abs(o));
    mono_pass += ok;
    f << "monotone," << k << ',' << n << ',' << fmt(v) << ',' << fmt(o) << ',' << fmt(std::abs(v - o))
      << ',' << (ok ? "true" : "false") << '\n';
  }
  for (int k = 0; k < 200; ++k) {
    const auto n = 1 + static_cast<std::size_t>(rng.below(12));
    const auto pop = instance_population(rng, n, 1);
    ScoreVector s{pop.ids(), {}};
    double total_cost = 0;
    for (std::size_t i = 0; i < n; ++i) {
      s.scores.push_back(rng.uniform(0.0, 100.0));
      total_cost += pop[i].weight * pop[i].cost;
    }
    const DollarBudget b{rng.uniform(0.01, 1.2) * total_cost};
    // Nonnegative weighted scores, so the knapsack bound is the relevant optimum.
    const double v = allocation_value(roi_allocation(s, pop, b), s, pop);
    const double o = oracles::knapsack_optimum(s, pop, b);
    const bool ok = std::abs(v - o) <= 1e-9 * std::max(1.0, std::abs(o));
    roi_pass += ok;
    f << "roi," << k << ',' << n << ',' << fmt(v) << ',' << fmt(o) << ',' << fmt(std::abs(v - o))
      << ',' << (ok ? "true" : "false") << '\n';
  }
  res.checks.push_back({"monotone_matches_brute_force", std::to_string(mono_pass) + "/100",
                        mono_pass == 100});
  res.checks.push_back({"roi_matches_knapsack", std::to_string(roi_pass) + "/200", roi_pass == 200});
}

void suite_lemma(SuiteResult& res, const std::filesystem::path& out, std::uint64_t seed) {
  auto f = open_out(out / "lemma.csv");
  f << "instance,lemma1_pass,lemma2_pass\n";
  Rng rng(derive_seed(seed, 102));
  int p1 = 0, p2 = 0;
  for (int k = 0; k < 500; ++k) {
    const double n = static_cast<double>(10 + rng.below(991));
    auto group = [&](double m, double fp, double tp) {
      GroupStats g;
      g.n = n;
      g.m = m;
      g.r = n - m;
      g.tp = tp;
      g.fp = fp;
      g.audits = tp + fp;
      return g;
    };
    const double m1 = static_cast<double>(1 + rng.below(static_cast<std::uint64_t>(n) - 1));
    const double m2 = static_cast<double>(1 + rng.below(static_cast<std::uint64_t>(n) - 1));
    // Lemma 1: shared TPR beta, free FPRs.
    const double beta = rng.uniform(0.01, 1.0);
    const auto a1 = group(m1, rng.uniform(0.0, 1.0) * (n - m1), beta * m1);
    const auto a2 = group(m2, rng.uniform(0.0, 1.0) * (n - m2), beta * m2);
    const auto l1 = lemma1_check(a1, a2);
    // Lemma 2: shared (alpha, beta).
    const double alpha = rng.uniform(0.0, 1.0), beta2 = rng.uniform(0.0, 1.0);
    const auto b1 = group(m1, alpha * (n - m1), beta2 * m1);
    const auto b2 = group(m2, alpha * (n - m2), beta2 * m2);
    const auto l2 = lemma2_check(alpha, beta2, b1, b2);
    const bool ok1 = l1.applicable && l1.pass, ok2 = l2.applicable && l2.pass;
    p1 += ok1;
    p2 += ok2;
    f << k << ',' << (ok1 ? "true" : "false") << ',' << (ok2 ? "true" : "false") << '\n';
  }
  res.checks.push_back({"lemma1_identity", std::to_string(p1) + "/500", p1 == 500});
  res.checks.push_back({"lemma2_identity", std::to_string(p2) + "/500", p2 == 500});
}

void suite_threshold_sweep(SuiteResult& res, const std::filesystem::path& out,
                           const SuiteOptions& o) {
  auto cfg = default_experiment_config(o.seeds.front(), o.n_records);
  cfg.models.resize(1);  // the classifier
  const auto r = run_experiment(cfg);
  write_artifacts(r, cfg, out / "experiment");
  const auto& alloc = r.at(cfg.models.front().label).allocation;
  auto f = open_out(out / "sweep.csv");
  f << "tau,no_change_rate\n";
  std::vector<double> rates;
  for (double tau : {200.0, 1000.0, 5000.0, 10000.0}) {
    const auto nc = no_change_rate(alloc, r.test, tau);
    if (!nc) throw Error("classifier allocation audits nobody");
    rates.push_back(*nc);
    f << fmt(tau) << ',' << fmt(*nc) << '\n';
  }
  const bool ok = std::is_sorted(rates.begin(), rates.end());
  res.checks.push_back({"no_change_nondecreasing_in_tau",
                        fmt(rates.front()) + " to " + fmt(rates.back()), ok});
}

void suite_paper_qualitative(SuiteResult& res, const std::filesystem::path& out,
                             const SuiteOptions& o) {
  auto table = open_out(out / "seeds.csv");
  table << "seed,classification_overlap,regression_overlap,classification_revenue,"
           "regression_revenue,monotone,monotone_revenue_loss,roi_low_income_share\n";
  int reg_wins = 0;
  double worst_share = 1.0, worst_loss = -1.0;
  bool all_monotone = true;
  for (auto seed : o.seeds) {
    const auto dir = out / ("seed-" + std::to_string(seed));
    const auto cfg = default_experiment_config(seed, o.n_records);
    const auto r = run_experiment(cfg);
    write_artifacts(r, cfg, dir / "rate");

    const auto& cls = r.at("GB-classification").metrics;
    const auto& reg = r.at("GB-regression").metrics;
    reg_wins += *reg.oracle_overlap > *cls.oracle_overlap && reg.revenue > cls.revenue;

    const auto& mono = r.at("GB-regression-monotone").metrics;
    const bool monotone =
        check_monotone(std::span<const std::optional<double>>(mono.audit_rate_by_bucket), 1e-9);
    all_monotone = all_monotone && monotone;
    const double loss = 1.0 - mono.revenue / reg.revenue;
    worst_loss = std::max(worst_loss, loss);

    auto dcfg = cfg;
    dcfg.budget = DollarBudget{};
    dcfg.models = {cfg.models[1]};
    const auto d = run_experiment(dcfg);
    write_artifacts(d, dcfg, dir / "dollar");
    const auto& a = d.at("GB-regression").allocation;
    double low = 0, total = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double mass = a.alpha[i] * d.test[i].weight;
      total += mass;
      if (d.test[i].bucket <= 3) low += mass;
    }
    const double share = total > 0 ? low / total : 0.0;
    worst_share = std::min(worst_share, share);

    table << seed << ',' << fmt(*cls.oracle_overlap) << ',' << fmt(*reg.oracle_overlap) << ','
          << fmt(cls.revenue) << ',' << fmt(reg.revenue) << ',' << (monotone ? "true" : "false")
          << ',' << fmt(loss) << ',' << fmt(share) << '\n';
  }
  const int n = static_cast<int>(o.seeds.size());
  const int need = static_cast<int>(std::ceil(0.8 * n));
  res.checks.push_back({"regression_beats_classification",
                        std::to_string(reg_wins) + "/" + std::to_string(n) + " seeds (need " +
                            std::to_string(need) + ")",
                        reg_wins >= need});
  res.checks.push_back({"roi_targets_low_income", "min share " + fmt(worst_share),
                        worst_share >= 0.70});
  res.checks.push_back({"monotone_modest_loss",
                        std::string(all_monotone ? "monotone" : "not monotone") +
                            "; max revenue loss " + fmt(worst_loss),
                        all_monotone && worst_loss <= 0.10});
}

}  // namespace

SuiteResult run_suite(const std::string& name, const std::filesystem::path& out,
                      const SuiteOptions& options) {
  if (std::find(kSuiteNames.begin(), kSuiteNames.end(), name) == kSuiteNames.end())
    throw ConfigError("unknown suite \"" + name + "\"");
  if (options.seeds.empty()) throw ConfigError("suite needs at least one seed");
  std::filesystem::create_directories(out);
  SuiteResult res;
  res.name = name;
  if (name == "paper-qualitative") suite_paper_qualitative(res, out, options);
  else if (name == "solver-oracle") suite_solver_oracle(res, out, options.seeds.front());
  else if (name == "lemma-properties") suite_lemma(res, out, options.seeds.front());
  else suite_threshold_sweep(res, out, options);
  auto f = open_out(out / "summary.csv");
  write_summary(res, f);
  return res;
}

}  // namespace auditalloc
