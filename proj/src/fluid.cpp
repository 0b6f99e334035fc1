#include "hetlb/fluid.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace hetlb {

FluidParams lambda_p_matrix(const RoutingMatrix& p, std::span<const double> lambda_h,
                            const Matrix& mu) {
  const std::size_t H = mu.rows(), M = mu.cols();
  if (!p.p.same_shape(mu) || lambda_h.size() != H)
    throw std::invalid_argument("lambda_p_matrix: shape mismatch");

  std::set<double> rates;
  for (std::size_t h = 0; h < H; ++h)
    for (std::size_t m = 0; m < M; ++m)
      if (p(h, m) > 0.0) {
        if (!(mu(h, m) > 0.0))
          throw std::invalid_argument("lambda_p_matrix: routing into incompatible cell");
        rates.insert(mu(h, m));
      }

  FluidParams out;
  out.mu_k.assign(rates.begin(), rates.end());
  const std::size_t K = out.mu_k.size();
  out.lambda_p = Matrix(M, K, 0.0);
  out.x_p = Matrix(M, K, 0.0);
  for (std::size_t h = 0; h < H; ++h)
    for (std::size_t m = 0; m < M; ++m) {
      if (p(h, m) == 0.0) continue;
      auto it = std::lower_bound(out.mu_k.begin(), out.mu_k.end(), mu(h, m));
      std::size_t k = static_cast<std::size_t>(it - out.mu_k.begin());
      out.lambda_p(m, k) += p(h, m) * lambda_h[h];
    }
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t k = 0; k < K; ++k) out.x_p(m, k) = out.lambda_p(m, k) / out.mu_k[k];
  return out;
}

double ode_transient(double lambda_mk, double mu_k, double x0, double t) {
  if (!(mu_k > 0.0)) throw std::invalid_argument("ode_transient: mu_k must be positive");
  if (t < 0.0) throw std::invalid_argument("ode_transient: t must be nonnegative");
  const double eq = lambda_mk / mu_k;
  return eq + (x0 - eq) * std::exp(-mu_k * t);
}

Matrix icrd_fixed_point(std::span<const double> lambda_h, const RoutingMatrix& p,
                        const Matrix& mu) {
  const std::size_t H = mu.rows(), M = mu.cols();
  if (!p.p.same_shape(mu) || lambda_h.size() != H)
    throw std::invalid_argument("icrd_fixed_point: shape mismatch");
  Matrix x(H, M, 0.0);
  for (std::size_t h = 0; h < H; ++h)
    for (std::size_t m = 0; m < M; ++m) {
      if (p(h, m) == 0.0) continue;
      if (!(mu(h, m) > 0.0))
        throw std::invalid_argument("icrd_fixed_point: routing into incompatible cell");
      x(h, m) = lambda_h[h] * p(h, m) / mu(h, m);
    }
  return x;
}

std::vector<double> stolyar_fixed_point(double lambda, std::span<const double> mu_j,
                                        std::span<const double> beta_j, double residual_tol) {
  const std::size_t J = mu_j.size();
  if (beta_j.size() != J || J == 0) throw std::invalid_argument("stolyar_fixed_point: bad shapes");
  double capacity = 0.0;
  for (std::size_t j = 0; j < J; ++j) {
    if (!(mu_j[j] > 0.0) || !(beta_j[j] > 0.0))
      throw std::invalid_argument("stolyar_fixed_point: mu_j and beta_j must be positive");
    capacity += mu_j[j] * beta_j[j];
  }
  if (!(lambda < capacity))
    throw std::invalid_argument("stolyar_fixed_point: supercritical (lambda >= sum mu_j beta_j)");
  if (!(lambda >= 0.0)) throw std::invalid_argument("stolyar_fixed_point: negative lambda");

  // g(c) = sum_j mu_j c beta_j / (mu_j + c) increases from 0 to capacity.
  auto g = [&](double c) {
    double total = 0.0;
    for (std::size_t j = 0; j < J; ++j) total += mu_j[j] * c * beta_j[j] / (mu_j[j] + c);
    return total;
  };

  double hi = 1.0;
  while (g(hi) < lambda) {
    hi *= 2.0;
    if (hi > 1e18) throw std::logic_error("stolyar_fixed_point: bracketing failed");
  }
  double lo = 0.0;
  double c = 0.0;
  for (int it = 0; it < 200; ++it) {
    c = 0.5 * (lo + hi);
    const double val = g(c);
    if (std::abs(val - lambda) <= residual_tol) break;
    if (val < lambda)
      lo = c;
    else
      hi = c;
  }

  std::vector<double> x(J);
  for (std::size_t j = 0; j < J; ++j) x[j] = c * beta_j[j] / (mu_j[j] + c);
  return x;
}

}  // namespace hetlb
