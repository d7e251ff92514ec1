#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "auditalloc/common.hpp"

namespace auditalloc {

inline constexpr int kDeciles = 10;
inline constexpr double kDefaultTau = 200.0;

/// One filer. `misreport` is true minus reported liability (negative when the
/// filer overstated). `bucket` is 1-based once assigned and 0 before.
struct TaxpayerRecord {
  std::int64_t id = 0;
  std::vector<double> features;
  double reported_income = 0.0;
  double misreport = 0.0;
  double cost = 1.0;
  double weight = 1.0;
  int activity_group = 0;
  int bucket = 0;
};

/// Ordered, weighted collection of records. Immutable once built; every
/// transform returns a new Population.
class Population {
 public:
  Population() = default;

  /// Validates weight > 0, cost > 0, reported_income >= 0, unique ids and a
  /// common feature length. Throws DataError on violation.
  explicit Population(std::vector<TaxpayerRecord> records, int n_buckets = kDeciles);

  std::span<const TaxpayerRecord> records() const noexcept { return records_; }
  const TaxpayerRecord& operator[](std::size_t i) const { return records_[i]; }
  std::size_t size() const noexcept { return records_.size(); }
  bool empty() const noexcept { return records_.empty(); }

  int n_buckets() const noexcept { return n_buckets_; }
  double total_weight() const noexcept { return total_weight_; }
  std::size_t feature_count() const noexcept { return feature_count_; }

  /// True when every record carries a bucket in 1..n_buckets.
  bool bucketed() const noexcept { return bucketed_; }
  void require_bucketed(const char* operation) const;

  std::vector<double> weights() const;
  std::vector<double> misreports() const;
  std::vector<double> costs() const;
  std::vector<int> buckets() const;
  std::vector<std::int64_t> ids() const;

  /// Same records and bucket count with the listed fields replaced.
  Population with_costs(std::span<const double> costs) const;
  Population with_misreports(std::span<const double> misreports) const;

 private:
  std::vector<TaxpayerRecord> records_;
  int n_buckets_ = kDeciles;
  double total_weight_ = 0.0;
  std::size_t feature_count_ = 0;
  bool bucketed_ = false;
};

/// Parameters of the synthetic generator. Per-decile arrays are indexed by
/// income decile (0 = lowest).
struct PopulationConfig {
  std::int64_t n_records = 50'000;
  std::uint64_t seed = 0;
  int n_features = 6;

  // Misreporters get a misreport strictly above this amount.
  double misreport_threshold = kDefaultTau;
  std::array<double, kDeciles> misreport_rate{0.30, 0.33, 0.36, 0.38, 0.40,
                                              0.42, 0.45, 0.48, 0.52, 0.58};
  // Mean misreport among misreporters, dollars.
  std::array<double, kDeciles> mean_adjustment{1500, 1400, 1300, 1400, 1600,
                                               1900, 2400, 3200, 4500, 14000};
  double adjustment_log_sd = 1.0;
  // Non-misreporters receive a small adjustment in (-threshold, threshold]
  // with probability minor_adjustment_share * misreport_rate[d].
  double minor_adjustment_share = 0.5;

  // Mean audit cost per decile; default is base_cost * cost_ratio^(d/9).
  std::array<double, kDeciles> mean_cost = geometric_costs(50.0, 41.0);
  double cost_noise_sd = 0.25;
  std::vector<double> activity_group_cost_multipliers{1.0};

  double income_log_mean = 10.46;  // ln(35,000)
  double income_log_sd = 1.0;

  double weight_mean = 3000.0;
  double weight_income_elasticity = -0.35;
  double weight_noise_sd = 0.3;

  // Feature noise in decile 1; decile 10 gets feature_noise_ratio times more.
  double indicator_noise = 0.35;
  double amount_noise = 1.0;
  double feature_noise_ratio = 2.0;

  static std::array<double, kDeciles> geometric_costs(double base, double ratio);

  /// Throws ConfigError when the rate vector is not nondecreasing, the
  /// adjustment vector does not peak in the top decile, costs are not
  /// positive and nondecreasing, or scalar parameters are out of range.
  void validate() const;
};

void to_json(nlohmann::json& j, const PopulationConfig& c);
void from_json(const nlohmann::json& j, PopulationConfig& c);

/// Synthetic population calibrated to the per-decile targets in `config`.
/// Returned records are bucketed into income deciles. Throws SizeError when
/// n_records < 10 * kDeciles.
Population generate_population(const PopulationConfig& config);

/// CSV with header `id,weight,reported_income,misreport,cost,f0,...`.
/// Buckets are never persisted. Rows are numbered from 1, header excluded.
Population load_population(std::istream& in);
Population load_population(const std::filesystem::path& path);
void save_population(const Population& pop, std::ostream& out);
void save_population(const Population& pop, const std::filesystem::path& path);

/// Weighted income quantile buckets, 1 = lowest income. Ties in income are
/// ordered by id; a record whose cumulative weight lands exactly on a
/// boundary stays in the lower bucket.
Population assign_buckets(const Population& pop, int n_buckets);

inline bool misreport_flag(double delta, double tau) noexcept { return delta > tau; }

/// Weighted linear-interpolation quantile. With unit weights this is the
/// usual (n-1)q interpolation; integer weights behave exactly like
/// duplicated records.
double weighted_quantile(std::span<const double> values, std::span<const double> weights,
                         double q);

std::vector<double> winsorize(std::span<const double> values, std::span<const double> weights,
                              double lower_q, double upper_q);

Population winsorize_misreports(const Population& pop, double lower_q, double upper_q);

struct SplitResult {
  Population train;
  Population test;
};

/// Seeded shuffle split; the test part gets round(test_fraction * n) records
/// and both parts keep the input order.
SplitResult split(const Population& pop, double test_fraction, std::uint64_t seed);

struct Subsample {
  Population population;
  // Id of the source record behind each drawn row.
  std::vector<std::int64_t> source_ids;
};

/// n i.i.d. draws with probability w_i / W. Drawn rows get weight 1, fresh
/// ids 0..n-1 and keep the source record's bucket.
Subsample weighted_subsample(const Population& pop, std::int64_t n, std::uint64_t seed);

}  // namespace auditalloc
