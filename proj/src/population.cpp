#include "auditalloc/population.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "auditalloc/csv.hpp"

namespace auditalloc {

Population::Population(std::vector<TaxpayerRecord> records, int n_buckets)
    : records_(std::move(records)), n_buckets_(n_buckets) {
  if (n_buckets_ < 1) throw DataError("n_buckets must be at least 1");
  feature_count_ = records_.empty() ? 0 : records_.front().features.size();
  std::unordered_set<std::int64_t> seen;
  seen.reserve(records_.size());
  CompensatedSum total;
  bool all_bucketed = !records_.empty();
  for (const auto& r : records_) {
    if (!(r.weight > 0.0) || !std::isfinite(r.weight))
      throw DataError("record " + std::to_string(r.id) + ": weight must be positive");
    if (!(r.cost > 0.0) || !std::isfinite(r.cost))
      throw DataError("record " + std::to_string(r.id) + ": cost must be positive");
    if (!(r.reported_income >= 0.0))
      throw DataError("record " + std::to_string(r.id) + ": reported_income must be >= 0");
    if (!std::isfinite(r.misreport))
      throw DataError("record " + std::to_string(r.id) + ": misreport must be finite");
    if (r.features.size() != feature_count_)
      throw DataError("record " + std::to_string(r.id) + ": inconsistent feature count");
    if (r.bucket < 0 || r.bucket > n_buckets_)
      throw DataError("record " + std::to_string(r.id) + ": bucket out of range");
    if (!seen.insert(r.id).second) throw DataError("duplicate id " + std::to_string(r.id));
    if (r.bucket == 0) all_bucketed = false;
    total.add(r.weight);
  }
  total_weight_ = total.value();
  bucketed_ = all_bucketed;
}

void Population::require_bucketed(const char* operation) const {
  if (!bucketed_)
    throw DataError(std::string(operation) + ": population has no bucket assignment");
}

std::vector<double> Population::weights() const {
  std::vector<double> out;
  out.reserve(records_.size());
  for (const auto& r : records_) out.push_back(r.weight);
  return out;
}

std::vector<double> Population::misreports() const {
  std::vector<double> out;
  out.reserve(records_.size());
  for (const auto& r : records_) out.push_back(r.misreport);
  return out;
}

std::vector<double> Population::costs() const {
  std::vector<double> out;
  out.reserve(records_.size());
  for (const auto& r : records_) out.push_back(r.cost);
  return out;
}

std::vector<int> Population::buckets() const {
  std::vector<int> out;
  out.reserve(records_.size());
  for (const auto& r : records_) out.push_back(r.bucket);
  return out;
}

std::vector<std::int64_t> Population::ids() const {
  std::vector<std::int64_t> out;
  out.reserve(records_.size());
  for (const auto& r : records_) out.push_back(r.id);
  return out;
}

Population Population::with_costs(std::span<const double> costs) const {
  if (costs.size() != records_.size()) throw DimensionError("with_costs: size mismatch");
  auto copy = records_;
  for (std::size_t i = 0; i < copy.size(); ++i) copy[i].cost = costs[i];
  return Population(std::move(copy), n_buckets_);
}

Population Population::with_misreports(std::span<const double> misreports) const {
  if (misreports.size() != records_.size())
    throw DimensionError("with_misreports: size mismatch");
  auto copy = records_;
  for (std::size_t i = 0; i < copy.size(); ++i) copy[i].misreport = misreports[i];
  return Population(std::move(copy), n_buckets_);
}

// ---------------------------------------------------------------------------
// Configuration

std::array<double, kDeciles> PopulationConfig::geometric_costs(double base, double ratio) {
  std::array<double, kDeciles> out{};
  for (int d = 0; d < kDeciles; ++d)
    out[d] = base * std::pow(ratio, static_cast<double>(d) / (kDeciles - 1));
  return out;
}

void PopulationConfig::validate() const {
  if (n_records < 1) throw ConfigError("n_records must be positive");
  if (n_features < 3) throw ConfigError("n_features must be at least 3");
  if (!(misreport_threshold >= 0.0)) throw ConfigError("misreport_threshold must be >= 0");
  for (int d = 0; d < kDeciles; ++d) {
    if (!(misreport_rate[d] >= 0.0 && misreport_rate[d] <= 1.0))
      throw ConfigError("misreport_rate must lie in [0, 1]");
    if (d > 0 && misreport_rate[d] < misreport_rate[d - 1])
      throw ConfigError("misreport_rate must be nondecreasing across deciles");
    if (!(mean_adjustment[d] > misreport_threshold))
      throw ConfigError("mean_adjustment must exceed misreport_threshold");
    if (!(mean_cost[d] > 0.0)) throw ConfigError("mean_cost must be positive");
    if (d > 0 && mean_cost[d] < mean_cost[d - 1])
      throw ConfigError("mean_cost must be nondecreasing across deciles");
  }
  const double top = mean_adjustment[kDeciles - 1];
  for (int d = 0; d + 1 < kDeciles; ++d)
    if (mean_adjustment[d] >= top)
      throw ConfigError("mean_adjustment must attain its maximum at the top decile");
  if (activity_group_cost_multipliers.empty())
    throw ConfigError("activity_group_cost_multipliers must not be empty");
  for (double m : activity_group_cost_multipliers)
    if (!(m > 0.0)) throw ConfigError("activity group cost multipliers must be positive");
  if (!(adjustment_log_sd >= 0.0) || !(cost_noise_sd >= 0.0) || !(income_log_sd > 0.0) ||
      !(weight_noise_sd >= 0.0) || !(indicator_noise > 0.0) || !(amount_noise > 0.0) ||
      !(feature_noise_ratio > 0.0) || !(weight_mean > 0.0))
    throw ConfigError("noise and scale parameters must be positive");
  if (!(minor_adjustment_share >= 0.0 && minor_adjustment_share <= 1.0))
    throw ConfigError("minor_adjustment_share must lie in [0, 1]");
}

void to_json(nlohmann::json& j, const PopulationConfig& c) {
  j = nlohmann::json{
      {"n_records", c.n_records},
      {"seed", c.seed},
      {"n_features", c.n_features},
      {"misreport_threshold", c.misreport_threshold},
      {"misreport_rate", c.misreport_rate},
      {"mean_adjustment", c.mean_adjustment},
      {"adjustment_log_sd", c.adjustment_log_sd},
      {"minor_adjustment_share", c.minor_adjustment_share},
      {"mean_cost", c.mean_cost},
      {"cost_noise_sd", c.cost_noise_sd},
      {"activity_group_cost_multipliers", c.activity_group_cost_multipliers},
      {"income_log_mean", c.income_log_mean},
      {"income_log_sd", c.income_log_sd},
      {"weight_mean", c.weight_mean},
      {"weight_income_elasticity", c.weight_income_elasticity},
      {"weight_noise_sd", c.weight_noise_sd},
      {"indicator_noise", c.indicator_noise},
      {"amount_noise", c.amount_noise},
      {"feature_noise_ratio", c.feature_noise_ratio},
  };
}

void from_json(const nlohmann::json& j, PopulationConfig& c) {
  if (!j.is_object()) throw ConfigError("population config must be an object");
  static const std::unordered_set<std::string> known{
      "n_records",        "seed",          "n_features",
      "misreport_threshold", "misreport_rate", "mean_adjustment",
      "adjustment_log_sd", "minor_adjustment_share", "mean_cost",
      "base_cost",        "cost_ratio",    "cost_noise_sd",
      "activity_group_cost_multipliers", "income_log_mean", "income_log_sd",
      "weight_mean",      "weight_income_elasticity", "weight_noise_sd",
      "indicator_noise",  "amount_noise",  "feature_noise_ratio"};
  for (const auto& [key, _] : j.items())
    if (!known.contains(key)) throw ConfigError("unknown population config key \"" + key + "\"");
  try {
    PopulationConfig d;
    c = d;
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) j.at(key).get_to(field);
    };
    get("n_records", c.n_records);
    get("seed", c.seed);
    get("n_features", c.n_features);
    get("misreport_threshold", c.misreport_threshold);
    get("misreport_rate", c.misreport_rate);
    get("mean_adjustment", c.mean_adjustment);
    get("adjustment_log_sd", c.adjustment_log_sd);
    get("minor_adjustment_share", c.minor_adjustment_share);
    if (j.contains("mean_cost") && (j.contains("base_cost") || j.contains("cost_ratio")))
      throw ConfigError("give either mean_cost or base_cost/cost_ratio, not both");
    get("mean_cost", c.mean_cost);
    if (j.contains("base_cost") || j.contains("cost_ratio")) {
      double base = c.mean_cost.front();
      double ratio = c.mean_cost.back() / c.mean_cost.front();
      get("base_cost", base);
      get("cost_ratio", ratio);
      c.mean_cost = PopulationConfig::geometric_costs(base, ratio);
    }
    get("cost_noise_sd", c.cost_noise_sd);
    get("activity_group_cost_multipliers", c.activity_group_cost_multipliers);
    get("income_log_mean", c.income_log_mean);
    get("income_log_sd", c.income_log_sd);
    get("weight_mean", c.weight_mean);
    get("weight_income_elasticity", c.weight_income_elasticity);
    get("weight_noise_sd", c.weight_noise_sd);
    get("indicator_noise", c.indicator_noise);
    get("amount_noise", c.amount_noise);
    get("feature_noise_ratio", c.feature_noise_ratio);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("population config: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Generation

Population generate_population(const PopulationConfig& config) {
  config.validate();
  if (config.n_records < 10 * kDeciles)
    throw SizeError("n_records must be at least " + std::to_string(10 * kDeciles));

  const auto n = static_cast<std::size_t>(config.n_records);
  Rng frame_rng(derive_seed(config.seed, 11));
  Rng outcome_rng(derive_seed(config.seed, 12));
  Rng feature_rng(derive_seed(config.seed, 13));

  // Incomes and sampling weights first: deciles are weighted quantiles, so
  // the per-decile outcome model can only be applied once they are known.
  const double wn = config.weight_noise_sd;
  const double we = config.weight_income_elasticity;
  const double weight_scale = config.weight_mean * std::exp(-0.5 * (we * we + wn * wn));
  std::vector<TaxpayerRecord> records(n);
  std::vector<double> income_z(n);
  const auto n_groups = config.activity_group_cost_multipliers.size();
  for (std::size_t i = 0; i < n; ++i) {
    auto& r = records[i];
    r.id = static_cast<std::int64_t>(i);
    income_z[i] = frame_rng.normal();
    r.reported_income = std::exp(config.income_log_mean + config.income_log_sd * income_z[i]);
    r.weight = weight_scale * std::exp(we * income_z[i] + wn * frame_rng.normal());
    r.activity_group = n_groups > 1 ? static_cast<int>(frame_rng.below(n_groups)) : 0;
    r.features.assign(static_cast<std::size_t>(config.n_features), 0.0);
  }
  Population framed = assign_buckets(Population(records, kDeciles), kDeciles);
  const auto deciles = framed.buckets();

  const double thr = config.misreport_threshold;
  const double asd = config.adjustment_log_sd;
  const double csd = config.cost_noise_sd;
  for (std::size_t i = 0; i < n; ++i) {
    auto& r = records[i];
    const int d = deciles[i] - 1;
    const double rate = config.misreport_rate[d];
    const bool misreporter = outcome_rng.bernoulli(rate);
    if (misreporter) {
      const double excess = config.mean_adjustment[d] - thr;
      r.misreport = thr + excess * std::exp(asd * outcome_rng.normal() - 0.5 * asd * asd);
      // Guard the strict inequality against underflow of the lognormal draw.
      if (!(r.misreport > thr)) r.misreport = std::nextafter(thr, thr + 1.0);
    } else if (outcome_rng.bernoulli(config.minor_adjustment_share * rate)) {
      r.misreport = thr - 2.0 * thr * outcome_rng.uniform();
    } else {
      r.misreport = 0.0;
    }
    const double group_mult = config.activity_group_cost_multipliers[r.activity_group];
    r.cost = config.mean_cost[d] * group_mult *
             std::exp(csd * outcome_rng.normal() - 0.5 * csd * csd);

    const double scale = 1.0 + (config.feature_noise_ratio - 1.0) * d / (kDeciles - 1);
    const double m = misreport_flag(r.misreport, thr) ? 1.0 : 0.0;
    r.features[0] = std::log(r.reported_income);
    r.features[1] = m + config.indicator_noise * scale * feature_rng.normal();
    r.features[2] = std::log1p(std::max(r.misreport, 0.0)) +
                    config.amount_noise * scale * feature_rng.normal();
    for (std::size_t f = 3; f < r.features.size(); ++f) {
      // Nuisance columns; the first one is weakly income-correlated.
      const double rho = f == 3 ? 0.5 : 0.0;
      r.features[f] = rho * income_z[i] + std::sqrt(1.0 - rho * rho) * feature_rng.normal();
    }
    r.bucket = deciles[i];
  }
  return Population(std::move(records), kDeciles);
}

// ---------------------------------------------------------------------------
// CSV

namespace {

const std::vector<std::string> kFixedColumns{"id", "weight", "reported_income", "misreport",
                                             "cost"};

}  // namespace

Population load_population(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError(0, "id", "missing header");
  const auto header = csv::split_line(line);
  for (std::size_t c = 0; c < kFixedColumns.size(); ++c) {
    if (c >= header.size() || header[c] != kFixedColumns[c])
      throw ParseError(0, kFixedColumns[c], "missing column");
  }
  const std::size_t n_features = header.size() - kFixedColumns.size();
  for (std::size_t f = 0; f < n_features; ++f) {
    const std::string expected = "f" + std::to_string(f);
    if (header[kFixedColumns.size() + f] != expected)
      throw ParseError(0, expected, "missing column");
  }

  std::vector<TaxpayerRecord> records;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++row;
    const auto fields = csv::split_line(line);
    if (fields.size() != header.size()) {
      const std::size_t col = std::min(fields.size(), header.size() - 1);
      throw ParseError(row, header[col], "expected " + std::to_string(header.size()) +
                                             " fields, found " + std::to_string(fields.size()));
    }
    auto num = [&](std::size_t col) {
      const auto v = csv::parse_double(fields[col]);
      if (!v) throw ParseError(row, header[col], "non-numeric field \"" + fields[col] + "\"");
      return *v;
    };
    TaxpayerRecord r;
    const double id = num(0);
    if (id != std::floor(id) || std::abs(id) > 9.0e15)
      throw ParseError(row, "id", "id must be an integer");
    r.id = static_cast<std::int64_t>(id);
    r.weight = num(1);
    if (!(r.weight > 0.0)) throw ParseError(row, "weight", "weight must be positive");
    r.reported_income = num(2);
    if (!(r.reported_income >= 0.0))
      throw ParseError(row, "reported_income", "reported_income must be >= 0");
    r.misreport = num(3);
    r.cost = num(4);
    if (!(r.cost > 0.0)) throw ParseError(row, "cost", "cost must be positive");
    r.features.resize(n_features);
    for (std::size_t f = 0; f < n_features; ++f) r.features[f] = num(kFixedColumns.size() + f);
    records.push_back(std::move(r));
  }
  try {
    return Population(std::move(records), kDeciles);
  } catch (const DataError& e) {
    throw ParseError(row, "id", e.what());
  }
}

Population load_population(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return load_population(in);
}

void save_population(const Population& pop, std::ostream& out) {
  out << "id,weight,reported_income,misreport,cost";
  for (std::size_t f = 0; f < pop.feature_count(); ++f) out << ",f" << f;
  out << '\n';
  for (const auto& r : pop.records()) {
    out << r.id << ',' << csv::format_double(r.weight) << ','
        << csv::format_double(r.reported_income) << ',' << csv::format_double(r.misreport) << ','
        << csv::format_double(r.cost);
    for (double f : r.features) out << ',' << csv::format_double(f);
    out << '\n';
  }
}

void save_population(const Population& pop, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  save_population(pop, out);
}

// ---------------------------------------------------------------------------
// Transforms

Population assign_buckets(const Population& pop, int n_buckets) {
  if (n_buckets < 2) throw DataError("assign_buckets: n_buckets must be at least 2");
  const auto recs = pop.records();
  std::vector<std::size_t> order(recs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (recs[a].reported_income != recs[b].reported_income)
      return recs[a].reported_income < recs[b].reported_income;
    return recs[a].id < recs[b].id;
  });

  std::vector<TaxpayerRecord> out(recs.begin(), recs.end());
  const double total = pop.total_weight();
  CompensatedSum cum;
  for (std::size_t idx : order) {
    cum.add(recs[idx].weight);
    const double position = cum.value() * n_buckets / total;
    const int b = static_cast<int>(std::ceil(position - 1e-9));
    out[idx].bucket = std::clamp(b, 1, n_buckets);
  }
  return Population(std::move(out), n_buckets);
}

double weighted_quantile(std::span<const double> values, std::span<const double> weights,
                         double q) {
  if (values.size() != weights.size()) throw DimensionError("weighted_quantile: size mismatch");
  if (values.empty()) throw DataError("weighted_quantile: empty input");
  if (!(q >= 0.0 && q <= 1.0)) throw DataError("weighted_quantile: q must lie in [0, 1]");
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });

  // Record k is flat on [start_k, start_k + max(w_k - 1, 0)] in duplicated-
  // index coordinates and linear between consecutive flats.
  CompensatedSum total;
  for (double w : weights) total.add(w);
  const double h = q * std::max(total.value() - 1.0, 0.0);
  CompensatedSum start;
  double prev_end = 0.0;
  double prev_value = values[order.front()];
  for (std::size_t k = 0; k < order.size(); ++k) {
    const double x = values[order[k]];
    const double w = weights[order[k]];
    const double s = start.value();
    const double e = s + std::max(w - 1.0, 0.0);
    if (k > 0 && h < s) {
      const double frac = (h - prev_end) / (s - prev_end);
      return prev_value + (x - prev_value) * frac;
    }
    if (h <= e) return x;
    prev_end = e;
    prev_value = x;
    start.add(w);
  }
  return values[order.back()];
}

std::vector<double> winsorize(std::span<const double> values, std::span<const double> weights,
                              double lower_q, double upper_q) {
  if (!(lower_q >= 0.0 && lower_q < upper_q && upper_q <= 1.0))
    throw DataError("winsorize: need 0 <= lower_q < upper_q <= 1");
  std::vector<double> out(values.begin(), values.end());
  if (out.empty()) return out;
  const double lo = weighted_quantile(values, weights, lower_q);
  const double hi = weighted_quantile(values, weights, upper_q);
  for (double& v : out) v = std::clamp(v, lo, hi);
  return out;
}

Population winsorize_misreports(const Population& pop, double lower_q, double upper_q) {
  const auto deltas = pop.misreports();
  const auto w = pop.weights();
  return pop.with_misreports(winsorize(deltas, w, lower_q, upper_q));
}

SplitResult split(const Population& pop, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw DataError("split: test_fraction must lie in (0, 1)");
  const std::size_t n = pop.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, 21));
  rng.shuffle(order);
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
  std::vector<char> is_test(n, 0);
  for (std::size_t k = 0; k < n_test; ++k) is_test[order[k]] = 1;

  std::vector<TaxpayerRecord> train, test;
  train.reserve(n - n_test);
  test.reserve(n_test);
  for (std::size_t i = 0; i < n; ++i) (is_test[i] ? test : train).push_back(pop[i]);
  return {Population(std::move(train), pop.n_buckets()), Population(std::move(test), pop.n_buckets())};
}

Subsample weighted_subsample(const Population& pop, std::int64_t n, std::uint64_t seed) {
  if (n < 1) throw DataError("weighted_subsample: n must be at least 1");
  if (pop.empty()) throw DataError("weighted_subsample: empty population");
  const auto recs = pop.records();
  std::vector<double> cumulative(recs.size());
  CompensatedSum cum;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    cum.add(recs[i].weight);
    cumulative[i] = cum.value();
  }
  const double total = cumulative.back();
  Rng rng(derive_seed(seed, 31));
  Subsample out;
  std::vector<TaxpayerRecord> drawn;
  drawn.reserve(static_cast<std::size_t>(n));
  out.source_ids.reserve(static_cast<std::size_t>(n));
  for (std::int64_t k = 0; k < n; ++k) {
    const double u = rng.uniform() * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    if (it == cumulative.end()) --it;
    const auto& src = recs[static_cast<std::size_t>(it - cumulative.begin())];
    TaxpayerRecord r = src;
    r.id = k;
    r.weight = 1.0;
    drawn.push_back(std::move(r));
    out.source_ids.push_back(src.id);
  }
  out.population = Population(std::move(drawn), pop.n_buckets());
  return out;
}

}  // namespace auditalloc
