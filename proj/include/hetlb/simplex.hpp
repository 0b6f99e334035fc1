#pragma once

#include <vector>

namespace hetlb {

// Minimal dense LP solver:
//   minimize c.x  subject to  row.x (<= or =) rhs,  x >= 0.
// Two-phase primal simplex with Bland's anti-cycling rule.
struct LpRow {
  std::vector<double> coeffs;
  double rhs = 0.0;
  bool equality = false;  // false: <=, true: ==
};

struct LpResult {
  enum class Status { Optimal, Infeasible, Unbounded } status = Status::Optimal;
  double value = 0.0;
  std::vector<double> x;
};

LpResult solve_lp(const std::vector<double>& objective, const std::vector<LpRow>& rows,
                  double tol = 1e-9);

}  // namespace hetlb
