#pragma once

#include <span>
#include <string>
#include <vector>

#include "hetlb/model.hpp"
#include "hetlb/util.hpp"

namespace hetlb {

// Row-stochastic routing matrix p: task class h sends to server type m with
// probability p(h,m).
struct RoutingMatrix {
  Matrix p;

  RoutingMatrix() = default;
  explicit RoutingMatrix(Matrix m, double tol = 1e-9);

  std::size_t task_classes() const { return p.rows(); }
  std::size_t server_types() const { return p.cols(); }
  double operator()(std::size_t h, std::size_t m) const { return p(h, m); }

  static RoutingMatrix identity(std::size_t n);
};

enum class Verdict { Subcritical, HeavyLoad, Undecided };

const char* verdict_name(Verdict v);

// Certificate (or refutation) of subcriticality for a partition pair plus
// routing matrix, as produced by the dyadic search.
struct PartitionPlan {
  std::vector<double> w_breaks;
  std::vector<double> v_breaks;
  RoutingMatrix p;
  std::vector<double> rho_per_type;  // load per server type under p
  double rho_max = 0.0;
  Verdict verdict = Verdict::Undecided;

  // Inputs the loads were computed from; downstream reservation needs them.
  std::vector<double> lambda_h;  // per task class, already scaled by 1/xi
  Matrix mu_star;                // per-cell minimum rates (the envelope rates)

  struct LevelRecord {
    int n = 0;
    double rho_bar = 0.0;  // optimistic bound, from per-cell maxima
    double rho = 0.0;      // certificate bound, from per-cell minima
  };
  std::vector<LevelRecord> history;

  std::vector<double> v_widths() const;
};

// rho_m = sum_h lambda_h p(h,m) / (mu(h,m) * width_m); p = 0 cells contribute
// nothing regardless of mu. Routing into a mu = 0 cell is rejected.
std::vector<double> load_per_type(std::span<const double> lambda_h, const Matrix& mu,
                                  std::span<const double> v_widths, const RoutingMatrix& p);

struct MinimaxRouting {
  double rho = 0.0;
  RoutingMatrix p;
};

// LP: minimize rho subject to row-stochastic p >= 0, p(h,m) = 0 wherever
// mu(h,m) = 0, and load_per_type(p) <= rho componentwise.
MinimaxRouting solve_minimax_routing(std::span<const double> lambda_h, const Matrix& mu,
                                     std::span<const double> v_widths);

struct EpsilonAllocation {
  Matrix eps;  // same shape as p, rows proportional to p's rows
};

// Maximal uniform-alpha point of Poly(p), shrunk by a 0.99 safety factor.
EpsilonAllocation epsilon_allocation(const RoutingMatrix& p, std::span<const double> lambda_h,
                                     const Matrix& mu, std::span<const double> v_widths);

bool check_poly_membership(const Matrix& eps, const RoutingMatrix& p,
                           std::span<const double> lambda_h, const Matrix& mu,
                           std::span<const double> v_widths, double tol = 1e-9);

struct FindSubcriticalOptions {
  double xi = 1.0;
  int max_axis_cells = 1 << 10;  // reject dyadic levels beyond this
  CellExtremaOptions extrema;
};

// Dyadic partition search: refines 2^n x 2^n grids until the minimax load
// under per-cell minimum rates certifies rho < rho_star, the optimistic bound
// under per-cell maxima rules every partition out, or n_max is exhausted.
PartitionPlan find_subcritical(const ArrivalRate& lam, const RateFunction& f, double rho_star,
                               int n_max, const FindSubcriticalOptions& opts = {});

}  // namespace hetlb
