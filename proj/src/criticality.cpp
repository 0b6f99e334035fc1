#include "hetlb/criticality.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "hetlb/simplex.hpp"

namespace hetlb {

RoutingMatrix::RoutingMatrix(Matrix m, double tol) : p(std::move(m)) {
  for (std::size_t h = 0; h < p.rows(); ++h) {
    double row_sum = 0.0;
    for (std::size_t c = 0; c < p.cols(); ++c) {
      if (p(h, c) < -tol)
        throw std::invalid_argument("RoutingMatrix: negative entry in row " + std::to_string(h));
      if (p(h, c) < 0.0) p(h, c) = 0.0;
      row_sum += p(h, c);
    }
    if (std::abs(row_sum - 1.0) > tol)
      throw std::invalid_argument("RoutingMatrix: row " + std::to_string(h) +
                                  " sums to " + std::to_string(row_sum));
  }
}

RoutingMatrix RoutingMatrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return RoutingMatrix(std::move(m));
}

const char* verdict_name(Verdict v) {
  switch (v) {
    case Verdict::Subcritical: return "subcritical";
    case Verdict::HeavyLoad: return "heavy-load";
    case Verdict::Undecided: return "undecided";
  }
  return "?";
}

std::vector<double> PartitionPlan::v_widths() const {
  std::vector<double> w(v_breaks.size() - 1);
  for (std::size_t m = 0; m + 1 < v_breaks.size(); ++m) w[m] = v_breaks[m + 1] - v_breaks[m];
  return w;
}

std::vector<double> load_per_type(std::span<const double> lambda_h, const Matrix& mu,
                                  std::span<const double> v_widths, const RoutingMatrix& p) {
  const std::size_t H = mu.rows(), M = mu.cols();
  if (lambda_h.size() != H || v_widths.size() != M || !p.p.same_shape(mu))
    throw std::invalid_argument("load_per_type: shape mismatch");
  std::vector<double> rho(M, 0.0);
  for (std::size_t m = 0; m < M; ++m) {
    if (!(v_widths[m] > 0.0)) throw std::invalid_argument("load_per_type: zero-width server type");
    for (std::size_t h = 0; h < H; ++h) {
      if (p(h, m) == 0.0) continue;
      if (!(mu(h, m) > 0.0))
        throw std::invalid_argument("load_per_type: routing into incompatible cell (" +
                                    std::to_string(h) + "," + std::to_string(m) + ")");
      rho[m] += lambda_h[h] * p(h, m) / (mu(h, m) * v_widths[m]);
    }
  }
  return rho;
}

MinimaxRouting solve_minimax_routing(std::span<const double> lambda_h, const Matrix& mu,
                                     std::span<const double> v_widths) {
  const std::size_t H = mu.rows(), M = mu.cols();
  if (lambda_h.size() != H || v_widths.size() != M)
    throw std::invalid_argument("solve_minimax_routing: shape mismatch");

  // Variables: rho (index 0), then p(h,m) for cells with mu > 0.
  std::vector<std::vector<int>> var_of(H, std::vector<int>(M, -1));
  int n_vars = 1;
  for (std::size_t h = 0; h < H; ++h) {
    bool any = false;
    for (std::size_t m = 0; m < M; ++m) {
      if (mu(h, m) > 0.0) {
        var_of[h][m] = n_vars++;
        any = true;
      }
    }
    if (!any)
      throw std::invalid_argument("solve_minimax_routing: task class " + std::to_string(h) +
                                  " has no compatible server type (all-zero mu row)");
  }

  std::vector<double> objective(n_vars, 0.0);
  objective[0] = 1.0;

  std::vector<LpRow> rows;
  rows.reserve(H + M);
  for (std::size_t h = 0; h < H; ++h) {
    LpRow row;
    row.coeffs.assign(n_vars, 0.0);
    for (std::size_t m = 0; m < M; ++m)
      if (var_of[h][m] >= 0) row.coeffs[var_of[h][m]] = 1.0;
    row.rhs = 1.0;
    row.equality = true;
    rows.push_back(std::move(row));
  }
  for (std::size_t m = 0; m < M; ++m) {
    if (!(v_widths[m] > 0.0))
      throw std::invalid_argument("solve_minimax_routing: zero-width server type");
    LpRow row;
    row.coeffs.assign(n_vars, 0.0);
    row.coeffs[0] = -1.0;
    for (std::size_t h = 0; h < H; ++h)
      if (var_of[h][m] >= 0) row.coeffs[var_of[h][m]] = lambda_h[h] / (mu(h, m) * v_widths[m]);
    row.rhs = 0.0;
    row.equality = false;
    rows.push_back(std::move(row));
  }

  LpResult lp = solve_lp(objective, rows);
  if (lp.status == LpResult::Status::Infeasible)
    throw std::logic_error("solve_minimax_routing: LP infeasible despite compatible rows");
  if (lp.status == LpResult::Status::Unbounded)
    throw std::logic_error("solve_minimax_routing: LP unbounded (internal error)");

  Matrix p(H, M, 0.0);
  for (std::size_t h = 0; h < H; ++h) {
    double row_sum = 0.0;
    for (std::size_t m = 0; m < M; ++m)
      if (var_of[h][m] >= 0) row_sum += std::max(0.0, lp.x[var_of[h][m]]);
    // Row sums hold to solver tolerance; normalize exactly.
    for (std::size_t m = 0; m < M; ++m)
      if (var_of[h][m] >= 0) p(h, m) = std::max(0.0, lp.x[var_of[h][m]]) / row_sum;
  }

  MinimaxRouting out;
  out.p = RoutingMatrix(std::move(p));
  auto rho = load_per_type(lambda_h, mu, v_widths, out.p);
  out.rho = *std::max_element(rho.begin(), rho.end());
  return out;
}

namespace {

std::vector<double> epsilon_star(const RoutingMatrix& p, std::span<const double> lambda_h,
                                 const Matrix& mu, std::span<const double> v_widths) {
  const std::size_t H = mu.rows(), M = mu.cols();
  std::vector<double> eps_star(M);
  for (std::size_t m = 0; m < M; ++m) {
    double used = 0.0;
    for (std::size_t h = 0; h < H; ++h) {
      if (p(h, m) == 0.0) continue;
      if (!(mu(h, m) > 0.0))
        throw std::invalid_argument("epsilon_star: routing into incompatible cell");
      used += lambda_h[h] * p(h, m) / mu(h, m);
    }
    eps_star[m] = v_widths[m] - used;
  }
  return eps_star;
}

}  // namespace

EpsilonAllocation epsilon_allocation(const RoutingMatrix& p, std::span<const double> lambda_h,
                                     const Matrix& mu, std::span<const double> v_widths) {
  const std::size_t H = p.task_classes(), M = p.server_types();
  auto eps_star = epsilon_star(p, lambda_h, mu, v_widths);
  double alpha = std::numeric_limits<double>::infinity();
  for (std::size_t m = 0; m < M; ++m) {
    if (eps_star[m] < 0.0)
      throw std::invalid_argument("epsilon_allocation: server type " + std::to_string(m) +
                                  " is not subcritical under p (eps*_m = " +
                                  std::to_string(eps_star[m]) + ")");
    double col_sum = 0.0;
    for (std::size_t h = 0; h < H; ++h) col_sum += p(h, m);
    if (col_sum > 0.0) alpha = std::min(alpha, eps_star[m] / col_sum);
  }
  if (!std::isfinite(alpha)) alpha = 0.0;  // p routes nowhere; degenerate but consistent
  alpha *= 0.99;

  EpsilonAllocation out;
  out.eps = Matrix(H, M, 0.0);
  for (std::size_t h = 0; h < H; ++h)
    for (std::size_t m = 0; m < M; ++m) out.eps(h, m) = alpha * p(h, m);
  return out;
}

bool check_poly_membership(const Matrix& eps, const RoutingMatrix& p,
                           std::span<const double> lambda_h, const Matrix& mu,
                           std::span<const double> v_widths, double tol) {
  if (!eps.same_shape(p.p)) return false;
  const std::size_t H = eps.rows(), M = eps.cols();

  // Row proportionality: eps row h = alpha_h * p row h for some alpha_h >= 0.
  for (std::size_t h = 0; h < H; ++h) {
    double alpha = -1.0;
    for (std::size_t m = 0; m < M; ++m) {
      if (eps(h, m) < -tol) return false;
      if (p(h, m) > 0.0) {
        double ratio = eps(h, m) / p(h, m);
        if (alpha < 0.0)
          alpha = ratio;
        else if (std::abs(ratio - alpha) > tol)
          return false;
      } else if (std::abs(eps(h, m)) > tol) {
        return false;  // mass where p has none breaks proportionality
      }
    }
  }

  auto eps_star = epsilon_star(p, lambda_h, mu, v_widths);
  for (std::size_t m = 0; m < M; ++m) {
    double col = 0.0;
    for (std::size_t h = 0; h < H; ++h) col += eps(h, m);
    if (col > eps_star[m] + tol) return false;
  }
  return true;
}

PartitionPlan find_subcritical(const ArrivalRate& lam, const RateFunction& f, double rho_star,
                               int n_max, const FindSubcriticalOptions& opts) {
  if (!(rho_star > 0.0 && rho_star < 1.0))
    throw std::invalid_argument("find_subcritical: rho_star must be in (0,1)");
  if (n_max < 1) throw std::invalid_argument("find_subcritical: n_max must be >= 1");
  if ((1LL << n_max) > opts.max_axis_cells)
    throw std::invalid_argument("find_subcritical: 2^n_max exceeds the per-axis cell cap of " +
                                std::to_string(opts.max_axis_cells));

  PartitionPlan plan;
  const double inf = std::numeric_limits<double>::infinity();

  for (int n = 1; n <= n_max; ++n) {
    const std::size_t cells = std::size_t{1} << n;
    std::vector<double> breaks(cells + 1);
    for (std::size_t k = 0; k <= cells; ++k)
      breaks[k] = static_cast<double>(k) / static_cast<double>(cells);
    std::vector<double> widths(cells, 1.0 / static_cast<double>(cells));

    std::vector<double> lambda_h(cells);
    for (std::size_t h = 0; h < cells; ++h)
      lambda_h[h] = integrate_lambda(lam, breaks[h], breaks[h + 1], opts.xi);

    StepwiseRateFunction mu_hat = upper_envelope(f, breaks, breaks, opts.extrema);

    // Optimistic bound from per-cell maxima. Infeasibility here means some
    // task band has no capacity at all, so no partition can help.
    double rho_bar = inf;
    RoutingMatrix p_bar;
    bool bar_feasible = true;
    try {
      auto r = solve_minimax_routing(lambda_h, mu_hat.rates, widths);
      rho_bar = r.rho;
      p_bar = std::move(r.p);
    } catch (const std::invalid_argument&) {
      bar_feasible = false;
    }

    // Certificate bound from per-cell minima; an all-zero row only means this
    // level is too coarse, so refinement continues.
    double rho_lo = inf;
    RoutingMatrix p_lo;
    Matrix mu_star_rates;
    bool lo_feasible = false;
    try {
      StepwiseRateFunction mu_star = lower_envelope(f, breaks, breaks, opts.extrema);
      auto r = solve_minimax_routing(lambda_h, mu_star.rates, widths);
      rho_lo = r.rho;
      p_lo = std::move(r.p);
      mu_star_rates = mu_star.rates;
      lo_feasible = true;
    } catch (const std::invalid_argument&) {
      lo_feasible = false;
    }

    plan.history.push_back({n, rho_bar, rho_lo});

    if (!bar_feasible || rho_bar >= rho_star) {
      plan.w_breaks = breaks;
      plan.v_breaks = breaks;
      plan.verdict = Verdict::HeavyLoad;
      plan.lambda_h = lambda_h;
      if (bar_feasible) {
        plan.p = p_bar;
        plan.mu_star = mu_hat.rates;
        plan.rho_per_type = load_per_type(lambda_h, mu_hat.rates, widths, p_bar);
        plan.rho_max = rho_bar;
      } else {
        plan.rho_max = inf;
      }
      return plan;
    }

    if (lo_feasible && rho_lo < rho_star) {
      plan.w_breaks = breaks;
      plan.v_breaks = breaks;
      plan.verdict = Verdict::Subcritical;
      plan.p = p_lo;
      plan.lambda_h = lambda_h;
      plan.mu_star = mu_star_rates;
      plan.rho_per_type = load_per_type(lambda_h, mu_star_rates, widths, p_lo);
      plan.rho_max = rho_lo;
      return plan;
    }

    if (n == n_max) {
      plan.w_breaks = breaks;
      plan.v_breaks = breaks;
      plan.verdict = Verdict::Undecided;
      plan.lambda_h = lambda_h;
      if (lo_feasible) {
        plan.p = p_lo;
        plan.mu_star = mu_star_rates;
        plan.rho_per_type = load_per_type(lambda_h, mu_star_rates, widths, p_lo);
        plan.rho_max = rho_lo;
      } else {
        plan.rho_max = inf;
      }
      return plan;
    }
  }
  throw std::logic_error("find_subcritical: unreachable");
}

}  // namespace hetlb
