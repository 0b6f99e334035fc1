#include "hetlb/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace hetlb {

void validate_breaks(const std::vector<double>& breaks, const char* what) {
  if (breaks.size() < 2) throw std::invalid_argument(std::string(what) + ": need at least 2 breakpoints");
  if (breaks.front() != 0.0) throw std::invalid_argument(std::string(what) + ": first breakpoint must be 0");
  if (breaks.back() != 1.0) throw std::invalid_argument(std::string(what) + ": last breakpoint must be 1");
  for (std::size_t k = 1; k < breaks.size(); ++k)
    if (!(breaks[k - 1] < breaks[k]))
      throw std::invalid_argument(std::string(what) + ": breakpoints must be strictly increasing");
}

std::size_t interval_of(const std::vector<double>& breaks, double x) {
  // half-open convention: x in [b_k, b_{k+1})
  auto it = std::upper_bound(breaks.begin(), breaks.end(), x);
  if (it == breaks.begin()) throw std::invalid_argument("interval_of: coordinate below 0");
  std::size_t k = static_cast<std::size_t>(it - breaks.begin()) - 1;
  if (k >= breaks.size() - 1) throw std::invalid_argument("interval_of: coordinate not in [0,1)");
  return k;
}

StepwiseRateFunction::StepwiseRateFunction(std::vector<double> w, std::vector<double> v, Matrix r)
    : w_breaks(std::move(w)), v_breaks(std::move(v)), rates(std::move(r)) {
  validate_breaks(w_breaks, "w_breaks");
  validate_breaks(v_breaks, "v_breaks");
  if (rates.rows() != w_breaks.size() - 1 || rates.cols() != v_breaks.size() - 1)
    throw std::invalid_argument("StepwiseRateFunction: rates shape does not match breaks");
  for (std::size_t h = 0; h < rates.rows(); ++h) {
    bool has_positive = false;
    for (std::size_t m = 0; m < rates.cols(); ++m) {
      double mu = rates(h, m);
      if (!std::isfinite(mu) || mu < 0.0)
        throw std::invalid_argument("StepwiseRateFunction: rates must be finite and nonnegative");
      has_positive = has_positive || mu > 0.0;
    }
    if (!has_positive)
      throw std::invalid_argument("StepwiseRateFunction: row " + std::to_string(h) +
                                  " has no positive rate");
  }
}

double StepwiseRateFunction::operator()(double x, double y) const {
  return rates(interval_of(w_breaks, x), interval_of(v_breaks, y));
}

double eval_rate(const RateFunction& f, double x, double y) {
  return std::visit([&](const auto& g) { return g(x, y); }, f);
}

MembershipMap MembershipMap::equispaced(std::size_t n) {
  MembershipMap m;
  m.kind_ = Kind::Equispaced;
  m.values_.resize(n);
  for (std::size_t j = 0; j < n; ++j) m.values_[j] = static_cast<double>(j) / static_cast<double>(n);
  return m;
}

MembershipMap MembershipMap::seeded_uniform(std::size_t n, std::uint64_t seed) {
  MembershipMap m;
  m.kind_ = Kind::SeededUniform;
  m.values_.resize(n);
  Rng rng(seed);
  for (std::size_t j = 0; j < n; ++j) m.values_[j] = rng.uniform();
  return m;
}

MembershipMap MembershipMap::explicit_list(std::vector<double> values) {
  for (double v : values)
    if (!(v >= 0.0 && v < 1.0))
      throw std::invalid_argument("MembershipMap: explicit value outside [0,1)");
  MembershipMap m;
  m.kind_ = Kind::ExplicitList;
  m.values_ = std::move(values);
  return m;
}

ArrivalRate ArrivalRate::affine(double slope, double intercept) {
  ArrivalRate a;
  a.slope_ = slope;
  a.intercept_ = intercept;
  if (a(0.0) < 0.0 || intercept + slope < -1e-15)
    throw std::invalid_argument("ArrivalRate: affine function negative on [0,1)");
  if (!(a.total_mass() > 0.0) && !(slope == 0.0 && intercept == 0.0)) {
    // zero lambda is allowed for pure-death experiments; anything negative is not
    if (a.total_mass() < 0.0) throw std::invalid_argument("ArrivalRate: negative total mass");
  }
  return a;
}

ArrivalRate ArrivalRate::stepwise(std::vector<double> breaks, std::vector<double> values) {
  validate_breaks(breaks, "lambda breaks");
  if (values.size() != breaks.size() - 1)
    throw std::invalid_argument("ArrivalRate: values/breaks size mismatch");
  for (double v : values)
    if (!(v >= 0.0) || !std::isfinite(v))
      throw std::invalid_argument("ArrivalRate: stepwise values must be finite and nonnegative");
  ArrivalRate a;
  a.stepwise_breaks_ = std::move(breaks);
  a.stepwise_values_ = std::move(values);
  return a;
}

double ArrivalRate::operator()(double x) const {
  if (is_affine()) return slope_ * x + intercept_;
  return stepwise_values_[interval_of(stepwise_breaks_, x)];
}

double ArrivalRate::integral(double a, double b) const {
  if (!(a >= 0.0 && a < b && b <= 1.0))
    throw std::invalid_argument("ArrivalRate::integral: need 0 <= a < b <= 1");
  if (is_affine()) return slope_ * 0.5 * (b * b - a * a) + intercept_ * (b - a);
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < stepwise_breaks_.size(); ++k) {
    double lo = std::max(a, stepwise_breaks_[k]);
    double hi = std::min(b, stepwise_breaks_[k + 1]);
    if (hi > lo) total += stepwise_values_[k] * (hi - lo);
  }
  return total;
}

double integrate_lambda(const ArrivalRate& lam, double a, double b, double xi) {
  if (!(xi > 0.0)) throw std::invalid_argument("integrate_lambda: xi must be positive");
  return lam.integral(a, b) / xi;
}

namespace {

struct CellExtrema {
  double lo, hi;
};

// Exact extrema of a stepwise function over a target cell: the extrema over
// all table cells whose half-open rectangle intersects the target.
CellExtrema stepwise_cell_extrema(const StepwiseRateFunction& f, double x0, double x1, double y0,
                                  double y1) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t h = 0; h + 1 < f.w_breaks.size(); ++h) {
    if (f.w_breaks[h + 1] <= x0 || f.w_breaks[h] >= x1) continue;
    for (std::size_t m = 0; m + 1 < f.v_breaks.size(); ++m) {
      if (f.v_breaks[m + 1] <= y0 || f.v_breaks[m] >= y1) continue;
      lo = std::min(lo, f.rates(h, m));
      hi = std::max(hi, f.rates(h, m));
    }
  }
  return {lo, hi};
}

// Lattice sample of a general f over the cell, corners included. The right
// and top edges are clamped just inside the half-open domain.
CellExtrema sampled_cell_extrema(const GeneralRateFunction& f, double x0, double x1, double y0,
                                 double y1, const CellExtremaOptions& opts) {
  const int k = std::max(1, opts.grid);
  const double dx = x1 - x0, dy = y1 - y0;
  const double x_hi = x1 - dx * 1e-12, y_hi = y1 - dy * 1e-12;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (int a = 0; a <= k; ++a) {
    double x = std::min(x0 + dx * a / k, x_hi);
    for (int b = 0; b <= k; ++b) {
      double y = std::min(y0 + dy * b / k, y_hi);
      double v = f(x, y);
      if (!std::isfinite(v) || v < 0.0)
        throw std::invalid_argument("rate function returned a negative or non-finite value");
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (opts.lipschitz_slack && f.lipschitz_bound) {
    // Any point of the cell is within diam/(2k) of a lattice point, so a
    // slack of L*diam/k makes the bounds certain (and keeps them monotone
    // under dyadic refinement).
    double slack = *f.lipschitz_bound * std::hypot(dx, dy) / k;
    lo = std::max(0.0, lo - slack);
    hi += slack;
  }
  return {lo, hi};
}

CellExtrema cell_extrema(const RateFunction& f, double x0, double x1, double y0, double y1,
                         const CellExtremaOptions& opts) {
  if (!(0.0 <= x0 && x0 < x1 && x1 <= 1.0 && 0.0 <= y0 && y0 < y1 && y1 <= 1.0))
    throw std::invalid_argument("cell_extrema: degenerate or out-of-range cell");
  if (const auto* s = std::get_if<StepwiseRateFunction>(&f))
    return stepwise_cell_extrema(*s, x0, x1, y0, y1);
  return sampled_cell_extrema(std::get<GeneralRateFunction>(f), x0, x1, y0, y1, opts);
}

StepwiseRateFunction envelope(const RateFunction& f, const std::vector<double>& w_breaks,
                              const std::vector<double>& v_breaks, const CellExtremaOptions& opts,
                              bool upper) {
  validate_breaks(w_breaks, "w_breaks");
  validate_breaks(v_breaks, "v_breaks");
  const std::size_t H = w_breaks.size() - 1, M = v_breaks.size() - 1;
  Matrix cells(H, M);
  for (std::size_t h = 0; h < H; ++h) {
    bool row_positive = false;
    for (std::size_t m = 0; m < M; ++m) {
      auto e = cell_extrema(f, w_breaks[h], w_breaks[h + 1], v_breaks[m], v_breaks[m + 1], opts);
      cells(h, m) = upper ? e.hi : e.lo;
      row_positive = row_positive || cells(h, m) > 0.0;
    }
    if (!upper && !row_positive)
      throw std::invalid_argument("lower_envelope: task band " + std::to_string(h) +
                                  " has no cell with a positive minimum rate");
  }
  return StepwiseRateFunction(w_breaks, v_breaks, std::move(cells));
}

}  // namespace

double cell_min(const RateFunction& f, double x0, double x1, double y0, double y1,
                const CellExtremaOptions& opts) {
  return cell_extrema(f, x0, x1, y0, y1, opts).lo;
}

double cell_max(const RateFunction& f, double x0, double x1, double y0, double y1,
                const CellExtremaOptions& opts) {
  return cell_extrema(f, x0, x1, y0, y1, opts).hi;
}

StepwiseRateFunction lower_envelope(const RateFunction& f, const std::vector<double>& w_breaks,
                                    const std::vector<double>& v_breaks,
                                    const CellExtremaOptions& opts) {
  return envelope(f, w_breaks, v_breaks, opts, /*upper=*/false);
}

StepwiseRateFunction upper_envelope(const RateFunction& f, const std::vector<double>& w_breaks,
                                    const std::vector<double>& v_breaks,
                                    const CellExtremaOptions& opts) {
  return envelope(f, w_breaks, v_breaks, opts, /*upper=*/true);
}

SystemInstance build_instance(std::size_t N, std::size_t W, const RateFunction& f,
                              const ArrivalRate& lam, const MembershipMap& phi1,
                              const MembershipMap& phi2, std::size_t dense_cap) {
  if (N < 1 || W < 1) throw std::invalid_argument("build_instance: N and W must be >= 1");
  if (phi1.size() < W) throw std::invalid_argument("build_instance: phi1 not defined on [W]");
  if (phi2.size() < N) throw std::invalid_argument("build_instance: phi2 not defined on [N]");

  SystemInstance g;
  g.f_ = f;
  g.lambda_ = lam;
  g.xi_ = static_cast<double>(W) / static_cast<double>(N);
  g.dispatcher_coords_.resize(W);
  g.server_coords_.resize(N);
  g.arrival_rates_.resize(W);
  for (std::size_t i = 0; i < W; ++i) {
    g.dispatcher_coords_[i] = phi1(i);
    double rate = lam(g.dispatcher_coords_[i]);
    if (!std::isfinite(rate) || rate < 0.0)
      throw std::invalid_argument("build_instance: arrival rate negative or non-finite");
    g.arrival_rates_[i] = rate;
  }
  for (std::size_t j = 0; j < N; ++j) g.server_coords_[j] = phi2(j);

  const bool dense = W * N <= dense_cap;
  if (dense) g.dense_rates_.resize(W * N);

  // Full validation pass: rates finite and nonnegative, and every dispatcher
  // has at least one compatible server.
  for (std::size_t i = 0; i < W; ++i) {
    bool compatible = false;
    for (std::size_t j = 0; j < N; ++j) {
      double mu = eval_rate(f, g.dispatcher_coords_[i], g.server_coords_[j]);
      if (!std::isfinite(mu) || mu < 0.0)
        throw std::invalid_argument("build_instance: rate(" + std::to_string(i) + "," +
                                    std::to_string(j) + ") is negative or non-finite");
      if (mu > 0.0) compatible = true;
      if (dense) g.dense_rates_[i * N + j] = mu;
    }
    if (!compatible)
      throw std::invalid_argument("build_instance: dispatcher " + std::to_string(i) +
                                  " has no compatible server");
  }

  if (const auto* s = std::get_if<StepwiseRateFunction>(&f)) {
    std::set<double> vals;
    for (double v : s->rates.flat())
      if (v > 0.0) vals.insert(v);
    g.distinct_rates_.assign(vals.begin(), vals.end());
  }
  return g;
}

IndexGroups group_indices(const SystemInstance& instance, const std::vector<double>& w_breaks,
                          const std::vector<double>& v_breaks) {
  validate_breaks(w_breaks, "w_breaks");
  validate_breaks(v_breaks, "v_breaks");
  IndexGroups out;
  out.dispatcher_groups.resize(w_breaks.size() - 1);
  out.server_groups.resize(v_breaks.size() - 1);
  for (std::size_t i = 0; i < instance.num_dispatchers(); ++i)
    out.dispatcher_groups[interval_of(w_breaks, instance.dispatcher_coord(i))].push_back(
        static_cast<int>(i));
  for (std::size_t j = 0; j < instance.num_servers(); ++j)
    out.server_groups[interval_of(v_breaks, instance.server_coord(j))].push_back(
        static_cast<int>(j));
  return out;
}

}  // namespace hetlb
