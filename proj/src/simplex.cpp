#include "hetlb/simplex.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace hetlb {

namespace {

class Tableau {
 public:
  // Layout: m constraint rows, one objective row at index m.
  // Columns: n structural+slack+artificial variables, rhs at index n.
  Tableau(std::size_t m, std::size_t n) : m_(m), n_(n), a_((m + 1) * (n + 1), 0.0), basis_(m, -1) {}

  double& at(std::size_t r, std::size_t c) { return a_[r * (n_ + 1) + c]; }
  double at(std::size_t r, std::size_t c) const { return a_[r * (n_ + 1) + c]; }

  std::size_t rows() const { return m_; }
  std::size_t cols() const { return n_; }
  std::vector<int>& basis() { return basis_; }

  void pivot(std::size_t pr, std::size_t pc) {
    const double piv = at(pr, pc);
    for (std::size_t c = 0; c <= n_; ++c) at(pr, c) /= piv;
    for (std::size_t r = 0; r <= m_; ++r) {
      if (r == pr) continue;
      const double factor = at(r, pc);
      if (factor == 0.0) continue;
      for (std::size_t c = 0; c <= n_; ++c) at(r, c) -= factor * at(pr, c);
      at(r, pc) = 0.0;
    }
    basis_[pr] = static_cast<int>(pc);
  }

  // Bland's rule: entering = lowest-index column with reduced cost < -tol,
  // leaving = min ratio, ties broken by lowest basis variable index.
  // Columns >= allowed_cols are never entered (used to lock out artificials).
  LpResult::Status iterate(std::size_t allowed_cols, double tol) {
    for (;;) {
      std::size_t enter = n_;
      for (std::size_t c = 0; c < allowed_cols; ++c) {
        if (at(m_, c) < -tol) {
          enter = c;
          break;
        }
      }
      if (enter == n_) return LpResult::Status::Optimal;

      std::size_t leave = m_;
      double best_ratio = std::numeric_limits<double>::infinity();
      for (std::size_t r = 0; r < m_; ++r) {
        const double coef = at(r, enter);
        if (coef > tol) {
          const double ratio = at(r, n_) / coef;
          if (ratio < best_ratio - tol ||
              (ratio < best_ratio + tol && (leave == m_ || basis_[r] < basis_[leave]))) {
            best_ratio = ratio;
            leave = r;
          }
        }
      }
      if (leave == m_) return LpResult::Status::Unbounded;
      pivot(leave, enter);
    }
  }

 private:
  std::size_t m_, n_;
  std::vector<double> a_;
  std::vector<int> basis_;
};

}  // namespace

LpResult solve_lp(const std::vector<double>& objective, const std::vector<LpRow>& rows,
                  double tol) {
  const std::size_t n_struct = objective.size();
  const std::size_t m = rows.size();

  std::size_t n_slack = 0, n_art = 0;
  for (const auto& row : rows) {
    if (row.coeffs.size() != n_struct)
      throw std::invalid_argument("solve_lp: row width does not match objective");
    const bool flip = row.rhs < 0.0;
    if (!row.equality) {
      ++n_slack;
      if (flip) ++n_art;  // <= with negative rhs becomes >=: surplus + artificial
    } else {
      ++n_art;
    }
  }

  const std::size_t n_total = n_struct + n_slack + n_art;
  Tableau t(m, n_total);
  std::size_t slack_at = n_struct, art_at = n_struct + n_slack;
  std::vector<bool> is_artificial(n_total, false);

  for (std::size_t r = 0; r < m; ++r) {
    const auto& row = rows[r];
    const double sign = row.rhs < 0.0 ? -1.0 : 1.0;
    for (std::size_t c = 0; c < n_struct; ++c) t.at(r, c) = sign * row.coeffs[c];
    t.at(r, n_total) = sign * row.rhs;
    bool need_art = row.equality;
    if (!row.equality) {
      t.at(r, slack_at) = sign;  // slack (or surplus when the row was flipped)
      if (sign < 0.0) need_art = true;
      ++slack_at;
    }
    if (need_art) {
      t.at(r, art_at) = 1.0;
      is_artificial[art_at] = true;
      t.basis()[r] = static_cast<int>(art_at);
      ++art_at;
    } else {
      t.basis()[r] = static_cast<int>(slack_at - 1);
    }
  }

  // Phase 1: minimize the sum of artificials.
  if (n_art > 0) {
    for (std::size_t c = n_struct + n_slack; c < n_total; ++c) t.at(m, c) = 1.0;
    for (std::size_t r = 0; r < m; ++r) {
      if (is_artificial[static_cast<std::size_t>(t.basis()[r])])
        for (std::size_t c = 0; c <= n_total; ++c) t.at(m, c) -= t.at(r, c);
    }
    auto st = t.iterate(n_total, tol);
    if (st == LpResult::Status::Unbounded)
      throw std::logic_error("solve_lp: phase 1 unbounded (internal error)");
    if (t.at(m, n_total) < -tol) {
      LpResult res;
      res.status = LpResult::Status::Infeasible;
      return res;
    }
    // Pivot residual zero-level artificials out of the basis where possible.
    for (std::size_t r = 0; r < m; ++r) {
      if (!is_artificial[static_cast<std::size_t>(t.basis()[r])]) continue;
      for (std::size_t c = 0; c < n_struct + n_slack; ++c) {
        if (std::abs(t.at(r, c)) > tol) {
          t.pivot(r, c);
          break;
        }
      }
    }
  }

  // Phase 2: restore the real objective, priced out over the current basis.
  for (std::size_t c = 0; c <= n_total; ++c) t.at(m, c) = 0.0;
  for (std::size_t c = 0; c < n_struct; ++c) t.at(m, c) = objective[c];
  for (std::size_t r = 0; r < m; ++r) {
    const int b = t.basis()[r];
    if (b >= 0 && static_cast<std::size_t>(b) < n_struct && objective[b] != 0.0)
      for (std::size_t c = 0; c <= n_total; ++c) t.at(m, c) -= objective[b] * t.at(r, c);
  }

  auto st = t.iterate(n_struct + n_slack, tol);
  LpResult res;
  if (st == LpResult::Status::Unbounded) {
    res.status = LpResult::Status::Unbounded;
    return res;
  }
  res.status = LpResult::Status::Optimal;
  res.x.assign(n_struct, 0.0);
  for (std::size_t r = 0; r < m; ++r) {
    const int b = t.basis()[r];
    if (b >= 0 && static_cast<std::size_t>(b) < n_struct)
      res.x[static_cast<std::size_t>(b)] = t.at(r, n_total);
  }
  // Recompute the objective from x directly rather than trusting the sign
  // convention of the priced-out objective row.
  res.value = 0.0;
  for (std::size_t c = 0; c < n_struct; ++c) res.value += objective[c] * res.x[c];
  return res;
}

}  // namespace hetlb
