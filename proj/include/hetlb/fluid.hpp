#pragma once

#include <span>
#include <vector>

#include "hetlb/criticality.hpp"
#include "hetlb/util.hpp"

namespace hetlb {

// Fluid-limit parameters of the server-independent decomposition: per server
// type m and distinct rate mu_k, the arrival mass lambda^p and the fixed
// point x^p = lambda^p / mu_k.
struct FluidParams {
  std::vector<double> mu_k;  // distinct positive rates among routed cells, ascending
  Matrix lambda_p;           // M x K
  Matrix x_p;                // M x K

  std::size_t server_types() const { return lambda_p.rows(); }
  std::size_t rate_classes() const { return mu_k.size(); }
};

// Buckets routed cells by exact equality of their stored rate values.
FluidParams lambda_p_matrix(const RoutingMatrix& p, std::span<const double> lambda_h,
                            const Matrix& mu);

// Closed-form solution of x' = lambda - mu x from x(0) = x0.
double ode_transient(double lambda_mk, double mu_k, double x0, double t);

// Fraction-of-servers fixed point of the pruned dispatcher-independent system:
// x(h,m) = lambda_h p(h,m) / mu(h,m).
Matrix icrd_fixed_point(std::span<const double> lambda_h, const RoutingMatrix& p, const Matrix& mu);

// Fixed point of a single-dispatcher system with J server pools (rates mu_j,
// pool mass beta_j, arrival mass lambda < sum_j mu_j beta_j). Solves
// sum_j mu_j c beta_j/(mu_j + c) = lambda for the common ratio c by bisection.
std::vector<double> stolyar_fixed_point(double lambda, std::span<const double> mu_j,
                                        std::span<const double> beta_j,
                                        double residual_tol = 1e-12);

}  // namespace hetlb
