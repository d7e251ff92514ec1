#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "auditalloc/allocation.hpp"
#include "auditalloc/fairness.hpp"
#include "auditalloc/metrics.hpp"
#include "auditalloc/population.hpp"
#include "auditalloc/scoring.hpp"

namespace auditalloc {

struct FairnessOption {
  enum class Kind { None, Reduction, Postprocess, Monotone };
  Kind kind = Kind::None;
  FairnessConstraint constraint;
  int max_iters = 50;              // Reduction only
  std::int64_t subsample = 10'000;  // Reduction fits on this many weighted draws; 0 = full train
};

struct ModelRun {
  std::string label;
  ModelSpec spec;
  TargetKind target;
  FairnessOption fairness;
};

// Exactly one of `generate` / `load`. Generated populations take their seed
// from derive_seed(ExperimentConfig::seed, generate->seed).
struct PopulationSource {
  std::optional<PopulationConfig> generate;
  std::optional<std::filesystem::path> load;
  int n_buckets = kDeciles;
};

struct ExperimentConfig {
  PopulationSource population;
  double tau = kDefaultTau;
  double test_fraction = 0.25;
  // Weighted quantiles at which regression training targets are clipped.
  std::optional<std::pair<double, double>> winsorize = std::pair{0.01, 0.99};
  std::vector<ModelRun> models;
  BudgetSpec budget = RateBudget{};
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> output_dir;

  // Throws ConfigError describing the first problem found.
  void validate() const;
};

void to_json(nlohmann::json& j, const ExperimentConfig& c);
// Rejects unknown keys and validates.
void from_json(const nlohmann::json& j, ExperimentConfig& c);
ExperimentConfig load_config(const std::filesystem::path& path);

// Canonical JSON (all defaults spelled out) and its 64-bit FNV-1a hash.
std::string canonical_config(const ExperimentConfig& c);
std::uint64_t config_hash(const ExperimentConfig& c);

// The scenario behind the paper-qualitative suite: gradient-boosted
// classification and regression models, plus the monotone variant of the
// regression model, under the default rate budget.
ExperimentConfig default_experiment_config(std::uint64_t seed, std::int64_t n_records = 50'000);

struct ModelResult {
  std::string label;
  Allocation allocation;
  MetricsReport metrics;
  DisparityReport allocation_disparity;
  std::optional<DisparityReport> full_disparity;  // decisions on the whole test set
};

struct ExperimentResult {
  std::vector<ModelResult> models;  // "Oracle" first, then config order
  std::vector<std::string> warnings;
  std::uint64_t config_hash = 0;
  Population test;

  const ModelResult& at(const std::string& label) const;
};

// Validates, then builds the population, splits it, fits every model and
// allocates on the test part. Non-convergent reductions add a warning.
ExperimentResult run_experiment(const ExperimentConfig& config);

// Writes metrics.csv, audit_rate_by_bucket.csv, disparity.csv,
// allocation.csv and manifest.json into `out` (created if missing).
void write_artifacts(const ExperimentResult& result, const ExperimentConfig& config,
                     const std::filesystem::path& out);

// Long-format tables written by write_artifacts, with their readers.
struct RateRow {
  std::string model;
  int bucket = 0;
  std::optional<double> rate, oracle_rate;
};
void write_rate_table(const ExperimentResult& r, std::ostream& out);
std::vector<RateRow> read_rate_table(std::istream& in);

struct DisparityRow {
  std::string model;
  std::string scope;  // "allocation" or "full"
  BucketRates rates;
};
void write_disparity_table(const ExperimentResult& r, std::ostream& out);
std::vector<DisparityRow> read_disparity_table(std::istream& in);

struct AllocationRow {
  std::string model;
  std::int64_t id = 0;
  double alpha = 0.0;
};
void write_allocation_table(const ExperimentResult& r, std::ostream& out);
std::vector<AllocationRow> read_allocation_table(std::istream& in);

// ---------------------------------------------------------------------------
// Suites

struct SuiteCheck {
  std::string criterion;
  std::string detail;
  bool pass = false;
};

struct SuiteResult {
  std::string name;
  std::vector<SuiteCheck> checks;
  bool passed() const;
};

struct SuiteOptions {
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::int64_t n_records = 50'000;
};

inline const std::vector<std::string> kSuiteNames{"paper-qualitative", "solver-oracle",
                                                  "lemma-properties", "threshold-sweep"};

// Runs the named batch, writing its tables and summary.csv under `out`.
// Throws ConfigError for an unknown name.
SuiteResult run_suite(const std::string& name, const std::filesystem::path& out,
                      const SuiteOptions& options = {});

// CSV `suite,criterion,detail,pass`.
void write_summary(const SuiteResult& r, std::ostream& out);
SuiteResult read_summary(std::istream& in);

}  // namespace auditalloc
