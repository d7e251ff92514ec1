#pragma once

#include "auditalloc/allocation.hpp"

// Brute-force reference solvers for small instances. They share no code
// with the production allocators and exist to check them.
namespace auditalloc::oracles {

// Optimal objective sum(alpha * w * max(score, 0)) of the monotone program
// on a population with exactly three nonempty buckets. Enumerates every
// vertex of the arrangement formed by the per-bucket value breakpoints and
// the constraint lines in the (A_1, A_2) plane.
double monotone_optimum(const ScoreVector& scores, const Population& pop, RateBudget budget,
                        MonotoneBasis basis = MonotoneBasis::Rate);

// Optimal fractional-knapsack value sum(alpha * w * score) with spend
// sum(alpha * w * cost) <= budget. Enumerates every subset of full items
// plus at most one fractional item; n <= 20.
double knapsack_optimum(const ScoreVector& scores, const Population& pop, DollarBudget budget);

// Best sum(alpha * w * score) over rate-budget allocations, by enumerating
// which record (if any) is fractional and which are full; n <= 16.
double rate_budget_optimum(const ScoreVector& scores, const Population& pop, RateBudget budget);

}  // namespace auditalloc::oracles
