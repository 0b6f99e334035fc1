#pragma once

#include <functional>
#include <optional>
#include <variant>
#include <vector>

#include "hetlb/util.hpp"

namespace hetlb {

// Service-rate surface that is constant on a grid of half-open rectangles
// [w_{h-1}, w_h) x [v_{m-1}, v_m).
struct StepwiseRateFunction {
  std::vector<double> w_breaks;  // H+1 values, 0 = first, 1 = last, strictly increasing
  std::vector<double> v_breaks;  // M+1 values
  Matrix rates;                  // H x M, nonnegative, every row has a positive entry

  StepwiseRateFunction() = default;
  StepwiseRateFunction(std::vector<double> w, std::vector<double> v, Matrix r);

  std::size_t task_classes() const { return rates.rows(); }
  std::size_t server_types() const { return rates.cols(); }

  double operator()(double x, double y) const;
};

// Service-rate surface given by an arbitrary evaluator on [0,1)^2.
struct GeneralRateFunction {
  std::function<double(double, double)> evaluator;
  std::optional<double> lipschitz_bound;  // enables guaranteed cell-extremum slack
  double floor_rate = 0.0;                // declared mu^o, not globally verified

  double operator()(double x, double y) const { return evaluator(x, y); }
};

using RateFunction = std::variant<StepwiseRateFunction, GeneralRateFunction>;

double eval_rate(const RateFunction& f, double x, double y);

// Validates a partition of [0,1): strictly increasing, starts at 0, ends at 1.
void validate_breaks(const std::vector<double>& breaks, const char* what);

// Index of the half-open interval [b_{k}, b_{k+1}) containing x.
std::size_t interval_of(const std::vector<double>& breaks, double x);

// Maps integer ids (0-based) into [0,1).
class MembershipMap {
 public:
  enum class Kind { Equispaced, SeededUniform, ExplicitList };

  static MembershipMap equispaced(std::size_t n);
  static MembershipMap seeded_uniform(std::size_t n, std::uint64_t seed);
  static MembershipMap explicit_list(std::vector<double> values);

  double operator()(std::size_t index) const { return values_.at(index); }
  std::size_t size() const { return values_.size(); }
  Kind kind() const { return kind_; }
  const std::vector<double>& values() const { return values_; }

 private:
  Kind kind_ = Kind::Equispaced;
  std::vector<double> values_;
};

// Arrival-rate function lambda: [0,1) -> R_+, either stepwise or affine
// (lambda(x) = slope*x + intercept). Integrals are closed form.
class ArrivalRate {
 public:
  static ArrivalRate affine(double slope, double intercept);
  static ArrivalRate constant(double value) { return affine(0.0, value); }
  static ArrivalRate stepwise(std::vector<double> breaks, std::vector<double> values);

  double operator()(double x) const;
  // Integral of lambda over [a, b], 0 <= a < b <= 1.
  double integral(double a, double b) const;
  double total_mass() const { return integral(0.0, 1.0); }

  bool is_affine() const { return stepwise_values_.empty(); }
  double affine_slope() const { return slope_; }
  double affine_intercept() const { return intercept_; }
  const std::vector<double>& step_breaks() const { return stepwise_breaks_; }
  const std::vector<double>& step_values() const { return stepwise_values_; }

 private:
  double slope_ = 0.0, intercept_ = 0.0;
  std::vector<double> stepwise_breaks_;
  std::vector<double> stepwise_values_;
};

// lambda_h of the subcritical-regime definition: (1/xi) * int_a^b lambda.
double integrate_lambda(const ArrivalRate& lam, double a, double b, double xi);

struct CellExtremaOptions {
  int grid = 16;                // samples per axis (lattice of (grid+1)^2 points)
  bool lipschitz_slack = true;  // widen by L*diam/grid when a bound is declared
};

// Per-cell extrema of f over [x0,x1) x [y0,y1). Exact for stepwise f; lattice
// sampling (corners included) for general f, optionally corrected so the
// returned value is a true lower/upper bound.
double cell_min(const RateFunction& f, double x0, double x1, double y0, double y1,
                const CellExtremaOptions& opts = {});
double cell_max(const RateFunction& f, double x0, double x1, double y0, double y1,
                const CellExtremaOptions& opts = {});

// Stepwise minorant f' of f on the given grid (per-cell minimum). Rejects a
// grid row whose every cell minimum is zero: that task band would have no
// compatible service at all.
StepwiseRateFunction lower_envelope(const RateFunction& f, const std::vector<double>& w_breaks,
                                    const std::vector<double>& v_breaks,
                                    const CellExtremaOptions& opts = {});

// Stepwise majorant of f on the given grid (per-cell maximum).
StepwiseRateFunction upper_envelope(const RateFunction& f, const std::vector<double>& w_breaks,
                                    const std::vector<double>& v_breaks,
                                    const CellExtremaOptions& opts = {});

// One finite system G^N: W dispatchers, N servers, Poisson arrival rates, and
// the service-rate matrix generated by f through the membership maps.
class SystemInstance {
 public:
  SystemInstance() = default;

  std::size_t num_servers() const { return server_coords_.size(); }
  std::size_t num_dispatchers() const { return dispatcher_coords_.size(); }
  double xi() const { return xi_; }

  double rate(std::size_t dispatcher, std::size_t server) const {
    if (!dense_rates_.empty()) return dense_rates_[dispatcher * num_servers() + server];
    return eval_rate(f_, dispatcher_coords_[dispatcher], server_coords_[server]);
  }

  double arrival_rate(std::size_t dispatcher) const { return arrival_rates_[dispatcher]; }
  const std::vector<double>& arrival_rates() const { return arrival_rates_; }

  double dispatcher_coord(std::size_t i) const { return dispatcher_coords_[i]; }
  double server_coord(std::size_t j) const { return server_coords_[j]; }

  const RateFunction& f() const { return f_; }
  const ArrivalRate& lambda() const { return lambda_; }

  // Distinct positive rate values present in the rate table, ascending.
  // Populated for stepwise f; empty for general f (no finite table exists).
  const std::vector<double>& distinct_rates() const { return distinct_rates_; }

  bool storage_is_dense() const { return !dense_rates_.empty(); }

  friend SystemInstance build_instance(std::size_t N, std::size_t W, const RateFunction& f,
                                       const ArrivalRate& lam, const MembershipMap& phi1,
                                       const MembershipMap& phi2, std::size_t dense_cap);

 private:
  RateFunction f_;
  ArrivalRate lambda_;
  std::vector<double> dispatcher_coords_;
  std::vector<double> server_coords_;
  std::vector<double> arrival_rates_;
  std::vector<double> dense_rates_;  // W*N row-major, only when small enough
  std::vector<double> distinct_rates_;
  double xi_ = 1.0;
};

// Materializes G^N. Every (i,j) pair is evaluated once to validate finiteness
// and per-dispatcher compatibility, regardless of storage mode.
SystemInstance build_instance(std::size_t N, std::size_t W, const RateFunction& f,
                              const ArrivalRate& lam, const MembershipMap& phi1,
                              const MembershipMap& phi2, std::size_t dense_cap = 10'000'000);

struct IndexGroups {
  std::vector<std::vector<int>> dispatcher_groups;  // H lists, partition of [W]
  std::vector<std::vector<int>> server_groups;      // M lists, partition of [N]
};

IndexGroups group_indices(const SystemInstance& instance, const std::vector<double>& w_breaks,
                          const std::vector<double>& v_breaks);

}  // namespace hetlb
