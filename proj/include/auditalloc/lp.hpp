#pragma once

#include <limits>
#include <utility>
#include <vector>

namespace auditalloc::lp {

enum class Sense { LessEqual, Equal, GreaterEqual };
enum class Status { Optimal, Infeasible, Unbounded, IterationLimit };

// maximize c'x  subject to  rows(x) {<=,=,>=} rhs,  0 <= x <= upper.
// Columns are sparse (row, coefficient) lists; the row count is expected to
// be small (tens) while the column count may be large.
struct Problem {
  int n_rows = 0;
  std::vector<std::vector<std::pair<int, double>>> columns;
  std::vector<double> cost;
  std::vector<double> upper;
  std::vector<Sense> sense;
  std::vector<double> rhs;

  int add_row(Sense s, double b) {
    sense.push_back(s);
    rhs.push_back(b);
    return n_rows++;
  }
  int add_column(double c, double ub, std::vector<std::pair<int, double>> entries) {
    columns.push_back(std::move(entries));
    cost.push_back(c);
    upper.push_back(ub);
    return static_cast<int>(columns.size()) - 1;
  }
};

struct Options {
  double feasibility_tol = 1e-9;
  double optimality_tol = 1e-9;
  int max_iterations = 1'000'000;
  int refactor_every = 64;
};

struct Solution {
  Status status = Status::Infeasible;
  std::vector<double> x;
  double objective = 0.0;
  int iterations = 0;
};

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

// Two-phase bounded-variable revised simplex with an explicit basis inverse.
// Dantzig pricing, switching to Bland's rule after a run of degenerate pivots.
Solution solve(const Problem& problem, const Options& options = {});

}  // namespace auditalloc::lp
