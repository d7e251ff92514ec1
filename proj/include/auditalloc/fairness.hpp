#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "auditalloc/allocation.hpp"
#include "auditalloc/population.hpp"
#include "auditalloc/score_vector.hpp"
#include "auditalloc/scoring.hpp"

namespace auditalloc {

enum class ConstraintKind { DemographicParity, EqualTPR, EqualizedOdds };

std::string to_string(ConstraintKind k);
ConstraintKind parse_constraint(const std::string& name);

struct FairnessConstraint {
  ConstraintKind kind = ConstraintKind::DemographicParity;
  // Slack on each bucket's deviation from a common rate, so pairwise gaps
  // stay within 2 * epsilon.
  double epsilon = 0.01;

  void validate() const;  // ConfigError unless epsilon is finite and >= 0
};

// Per-bucket decision rates. Undefined cells (no records, no positives, no
// negatives) are nullopt and excluded from the gaps.
struct BucketRates {
  int bucket = 0;
  std::optional<double> selection_rate, tpr, fpr;
  std::optional<double> selection_rate_w, tpr_w, fpr_w;
};

struct DisparityReport {
  std::vector<BucketRates> buckets;
  double selection_gap = 0, tpr_gap = 0, fpr_gap = 0;
  double selection_gap_w = 0, tpr_gap_w = 0, fpr_gap_w = 0;

  // Max pairwise gap of the quantities `kind` constrains (EO: TPR and FPR).
  double gap(ConstraintKind kind, bool weighted) const;
};

// Decisions are 1[score >= threshold].
DisparityReport constraint_disparity(const ScoreVector& scores, const Population& pop,
                                     double tau, double threshold = 0.5);
// Fractional alpha counts as the audit probability.
DisparityReport constraint_disparity(const Allocation& alloc, const Population& pop, double tau);
// Decision probabilities given directly, aligned with pop.
DisparityReport disparity_from_decisions(std::span<const double> decisions, const Population& pop,
                                         double tau);

// CSV `bucket,selection_rate,tpr,fpr,selection_rate_w,tpr_w,fpr_w`; gaps are
// recomputed on read.
void write_disparity(const DisparityReport& r, std::ostream& out);
DisparityReport read_disparity(std::istream& in);

// ---------------------------------------------------------------------------
// In-processing: exponentiated-gradient reduction to cost-sensitive fits.

struct ReductionOptions {
  double tau = kDefaultTau;
  double bound = 100.0;     // l1 bound on the multipliers
  double eta0 = 2.0;        // step size is eta0 / bound
  double nu = 1e-4;         // stop once the duality gap is below this
};

struct ReductionResult {
  Scorer scorer;  // emits the mixture's probability of a positive decision
  double gap = 0.0;         // duality gap of the returned mixture
  double disparity = 0.0;   // constrained max pairwise gap on train, in expectation
  bool converged = false;   // gap <= nu before max_iters ran out
  int iterations = 0;
  std::vector<double> multipliers;  // averaged multipliers of the returned mixture
};

// Base families must accept sample weights (all of them do). Classification
// target at options.tau. Throws DegenerateLabelError like fit_scorer.
ReductionResult fit_reduction(const ModelSpec& base, const Population& train,
                              const FairnessConstraint& constraint, int max_iters,
                              std::uint64_t seed, const ReductionOptions& options = {});

// Realized 0/1 decision of a randomized scorer (reduction mixture or
// post-processed), drawn from a hash of (seed, record id).
bool realized_decision(double probability, std::uint64_t seed, std::int64_t id);

// ---------------------------------------------------------------------------
// Post-processing: per-bucket randomized thresholds on a fitted scorer.

// Decision rule for one bucket: with probability `weight`, select records
// whose base score is >= threshold (nullopt selects nobody).
struct ThresholdRule {
  std::optional<double> threshold;
  double weight = 1.0;
};

// The returned scorer scores a record as decision x base probability, with
// the decision realized per record id. Throws ConfigError for a regression
// scorer and DegenerateGroupError for a bucket lacking either label.
Scorer postprocess_thresholds(const Scorer& scorer, const Population& train,
                              const FairnessConstraint& constraint, std::uint64_t seed,
                              double tau = kDefaultTau);

// Accessors for a post-processed scorer; ConfigError for any other scorer.
const Scorer& postprocess_base(const Scorer& s);
const std::vector<std::vector<ThresholdRule>>& postprocess_rules(const Scorer& s);  // by bucket - 1
double decision_probability(const Scorer& s, const TaxpayerRecord& r);

}  // namespace auditalloc
