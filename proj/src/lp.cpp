#include "auditalloc/lp.hpp"

#include <algorithm>
#include <cmath>

#include "auditalloc/common.hpp"

namespace auditalloc::lp {

namespace {

enum class VarState : unsigned char { Basic, AtLower, AtUpper };

class Simplex {
 public:
  Simplex(const Problem& p, const Options& opt) : opt_(opt), m_(p.n_rows) {
    if (static_cast<int>(p.sense.size()) != m_ || static_cast<int>(p.rhs.size()) != m_)
      throw DimensionError("lp: row metadata does not match n_rows");
    if (p.cost.size() != p.columns.size() || p.upper.size() != p.columns.size())
      throw DimensionError("lp: column metadata size mismatch");
    n_struct_ = static_cast<int>(p.columns.size());

    std::vector<double> row_sign(m_, 1.0);
    rhs_.resize(m_);
    for (int r = 0; r < m_; ++r) {
      row_sign[r] = p.rhs[r] < 0.0 ? -1.0 : 1.0;
      rhs_[r] = row_sign[r] * p.rhs[r];
    }
    for (int j = 0; j < n_struct_; ++j) {
      auto col = p.columns[j];
      for (auto& [r, v] : col) {
        if (r < 0 || r >= m_) throw DimensionError("lp: column entry row out of range");
        v *= row_sign[r];
      }
      if (!(p.upper[j] >= 0.0)) throw DataError("lp: upper bounds must be >= 0");
      add(std::move(col), p.cost[j], p.upper[j]);
    }
    for (int r = 0; r < m_; ++r) {
      if (p.sense[r] == Sense::Equal) continue;
      const double s = p.sense[r] == Sense::LessEqual ? 1.0 : -1.0;
      add({{r, s * row_sign[r]}}, 0.0, kInfinity);
    }
    first_artificial_ = static_cast<int>(cols_.size());
    for (int r = 0; r < m_; ++r) add({{r, 1.0}}, 0.0, kInfinity);

    const int n = static_cast<int>(cols_.size());
    x_.assign(n, 0.0);
    state_.assign(n, VarState::AtLower);
    basis_.resize(m_);
    binv_.assign(static_cast<std::size_t>(m_) * m_, 0.0);
    for (int r = 0; r < m_; ++r) {
      basis_[r] = first_artificial_ + r;
      state_[basis_[r]] = VarState::Basic;
      x_[basis_[r]] = rhs_[r];
      binv_[idx(r, r)] = 1.0;
    }
  }

  Solution run() {
    Solution sol;
    // Phase 1: drive the artificials to zero.
    std::vector<double> phase1(cols_.size(), 0.0);
    for (int j = first_artificial_; j < static_cast<int>(cols_.size()); ++j) phase1[j] = -1.0;
    Status st = iterate(phase1, sol.iterations);
    if (st == Status::IterationLimit) {
      sol.status = st;
      return sol;
    }
    double infeasibility = 0.0;
    for (int j = first_artificial_; j < static_cast<int>(cols_.size()); ++j)
      infeasibility += x_[j];
    double scale = 1.0;
    for (double b : rhs_) scale = std::max(scale, std::abs(b));
    if (infeasibility > opt_.feasibility_tol * scale * std::max(1, m_)) {
      sol.status = Status::Infeasible;
      return sol;
    }
    for (int j = first_artificial_; j < static_cast<int>(cols_.size()); ++j) {
      upper_[j] = 0.0;
      if (state_[j] != VarState::Basic) {
        x_[j] = 0.0;
        state_[j] = VarState::AtLower;
      }
    }

    st = iterate(cost_, sol.iterations);
    sol.status = st;
    if (st != Status::Optimal) return sol;
    refactor();
    sol.x.resize(n_struct_);
    for (int j = 0; j < n_struct_; ++j) {
      sol.x[j] = std::clamp(x_[j], 0.0, upper_[j]);
      sol.objective += cost_[j] * sol.x[j];
    }
    return sol;
  }

 private:
  std::size_t idx(int i, int j) const {
    return static_cast<std::size_t>(i) * static_cast<std::size_t>(m_) + static_cast<std::size_t>(j);
  }

  void add(std::vector<std::pair<int, double>> col, double c, double ub) {
    cols_.push_back(std::move(col));
    cost_.push_back(c);
    upper_.push_back(ub);
  }

  // Binv * A_j
  void ftran(int j, std::vector<double>& out) const {
    out.assign(m_, 0.0);
    for (const auto& [r, v] : cols_[j])
      for (int i = 0; i < m_; ++i) out[i] += binv_[idx(i, r)] * v;
  }

  void refactor() {
    // Gauss-Jordan on the basis matrix with partial pivoting.
    std::vector<double> a(static_cast<std::size_t>(m_) * m_, 0.0);
    for (int k = 0; k < m_; ++k)
      for (const auto& [r, v] : cols_[basis_[k]]) a[idx(r, k)] = v;
    std::vector<double> inv(static_cast<std::size_t>(m_) * m_, 0.0);
    for (int i = 0; i < m_; ++i) inv[idx(i, i)] = 1.0;
    for (int c = 0; c < m_; ++c) {
      int piv = c;
      for (int r = c + 1; r < m_; ++r)
        if (std::abs(a[idx(r, c)]) > std::abs(a[idx(piv, c)])) piv = r;
      if (std::abs(a[idx(piv, c)]) < 1e-14) throw Error("lp: singular basis");
      if (piv != c)
        for (int k = 0; k < m_; ++k) {
          std::swap(a[idx(piv, k)], a[idx(c, k)]);
          std::swap(inv[idx(piv, k)], inv[idx(c, k)]);
        }
      const double d = a[idx(c, c)];
      for (int k = 0; k < m_; ++k) {
        a[idx(c, k)] /= d;
        inv[idx(c, k)] /= d;
      }
      for (int r = 0; r < m_; ++r) {
        if (r == c) continue;
        const double f = a[idx(r, c)];
        if (f == 0.0) continue;
        for (int k = 0; k < m_; ++k) {
          a[idx(r, k)] -= f * a[idx(c, k)];
          inv[idx(r, k)] -= f * inv[idx(c, k)];
        }
      }
    }
    binv_ = std::move(inv);
    std::vector<double> resid = rhs_;
    for (int j = 0; j < static_cast<int>(cols_.size()); ++j) {
      if (state_[j] == VarState::Basic || x_[j] == 0.0) continue;
      for (const auto& [r, v] : cols_[j]) resid[r] -= v * x_[j];
    }
    for (int i = 0; i < m_; ++i) {
      double s = 0.0;
      for (int r = 0; r < m_; ++r) s += binv_[idx(i, r)] * resid[r];
      x_[basis_[i]] = s;
    }
  }

  Status iterate(const std::vector<double>& c, int& iterations) {
    const int n = static_cast<int>(cols_.size());
    std::vector<double> y(m_), alpha(m_);
    int degenerate_run = 0;
    int since_refactor = 0;
    bool bland = false;
    while (true) {
      if (iterations >= opt_.max_iterations) return Status::IterationLimit;
      for (int r = 0; r < m_; ++r) {
        double s = 0.0;
        for (int i = 0; i < m_; ++i) s += c[basis_[i]] * binv_[idx(i, r)];
        y[r] = s;
      }

      int enter = -1;
      double best = 0.0;
      for (int j = 0; j < n; ++j) {
        if (state_[j] == VarState::Basic || upper_[j] <= 0.0) continue;
        double d = c[j];
        for (const auto& [r, v] : cols_[j]) d -= y[r] * v;
        double gain = 0.0;
        if (state_[j] == VarState::AtLower && d > opt_.optimality_tol) gain = d;
        if (state_[j] == VarState::AtUpper && d < -opt_.optimality_tol) gain = -d;
        if (gain <= 0.0) continue;
        if (bland) {
          enter = j;
          break;
        }
        if (gain > best) {
          best = gain;
          enter = j;
        }
      }
      if (enter < 0) return Status::Optimal;

      const double dir = state_[enter] == VarState::AtLower ? 1.0 : -1.0;
      ftran(enter, alpha);

      double theta = upper_[enter];
      int leave = -1;
      bool leave_to_upper = false;
      for (int i = 0; i < m_; ++i) {
        const double delta = dir * alpha[i];
        if (std::abs(delta) < 1e-11) continue;
        const int b = basis_[i];
        double t;
        bool to_upper;
        if (delta > 0.0) {
          t = std::max(x_[b], 0.0) / delta;
          to_upper = false;
        } else {
          if (!std::isfinite(upper_[b])) continue;
          t = std::max(upper_[b] - x_[b], 0.0) / -delta;
          to_upper = true;
        }
        bool take = false;
        if (leave < 0 ? t < theta : t < theta - 1e-12) {
          take = true;
        } else if (leave >= 0 && t <= theta + 1e-12) {
          take = bland ? b < basis_[leave] : std::abs(alpha[i]) > std::abs(alpha[leave]);
        }
        if (take) {
          theta = t;
          leave = i;
          leave_to_upper = to_upper;
        }
      }
      if (!std::isfinite(theta)) return Status::Unbounded;

      ++iterations;
      x_[enter] += dir * theta;
      for (int i = 0; i < m_; ++i) x_[basis_[i]] -= theta * dir * alpha[i];

      if (leave < 0) {
        state_[enter] = dir > 0 ? VarState::AtUpper : VarState::AtLower;
        x_[enter] = dir > 0 ? upper_[enter] : 0.0;
      } else {
        const int out = basis_[leave];
        state_[out] = leave_to_upper ? VarState::AtUpper : VarState::AtLower;
        x_[out] = leave_to_upper ? upper_[out] : 0.0;
        basis_[leave] = enter;
        state_[enter] = VarState::Basic;
        const double piv = alpha[leave];
        for (int k = 0; k < m_; ++k) binv_[idx(leave, k)] /= piv;
        for (int i = 0; i < m_; ++i) {
          if (i == leave || alpha[i] == 0.0) continue;
          const double f = alpha[i];
          for (int k = 0; k < m_; ++k) binv_[idx(i, k)] -= f * binv_[idx(leave, k)];
        }
        if (++since_refactor >= opt_.refactor_every) {
          refactor();
          since_refactor = 0;
        }
      }

      if (theta < 1e-12) {
        if (++degenerate_run > 50) bland = true;
      } else {
        degenerate_run = 0;
        bland = false;
      }
    }
  }

  Options opt_;
  int m_;
  int n_struct_ = 0;
  int first_artificial_ = 0;
  std::vector<std::vector<std::pair<int, double>>> cols_;
  std::vector<double> cost_;
  std::vector<double> upper_;
  std::vector<double> rhs_;
  std::vector<double> x_;
  std::vector<VarState> state_;
  std::vector<int> basis_;
  std::vector<double> binv_;
};

}  // namespace

Solution solve(const Problem& problem, const Options& options) {
  if (problem.n_rows == 0) {
    // Box-constrained only: every positive-cost column sits at its bound.
    Solution sol;
    sol.status = Status::Optimal;
    sol.x.assign(problem.columns.size(), 0.0);
    for (std::size_t j = 0; j < problem.columns.size(); ++j) {
      if (problem.cost[j] > 0.0) {
        if (!std::isfinite(problem.upper[j])) {
          sol.status = Status::Unbounded;
          return sol;
        }
        sol.x[j] = problem.upper[j];
        sol.objective += problem.cost[j] * sol.x[j];
      }
    }
    return sol;
  }
  Simplex s(problem, options);
  return s.run();
}

}  // namespace auditalloc::lp
