#include "hetlb/policies.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace hetlb {

ReservationPlan icrd_reserve(const SystemInstance& g, const PartitionPlan& plan,
                             const EpsilonAllocation& eps) {
  if (plan.verdict != Verdict::Subcritical)
    throw std::invalid_argument("icrd_reserve: plan verdict is not subcritical");
  auto widths = plan.v_widths();
  if (!check_poly_membership(eps.eps, plan.p, plan.lambda_h, plan.mu_star, widths))
    throw std::invalid_argument("icrd_reserve: eps is not in Poly(p)");

  const std::size_t H = plan.p.task_classes(), M = plan.p.server_types();
  const std::size_t N = g.num_servers(), W = g.num_dispatchers();
  IndexGroups groups = group_indices(g, plan.w_breaks, plan.v_breaks);

  ReservationPlan r;
  r.w_breaks = plan.w_breaks;
  r.v_breaks = plan.v_breaks;
  r.block_rate = plan.mu_star;
  r.eps = eps.eps;
  r.dispatcher_class.assign(W, -1);
  for (std::size_t h = 0; h < H; ++h)
    for (int i : groups.dispatcher_groups[h]) r.dispatcher_class[i] = static_cast<int>(h);
  r.server_type.assign(N, -1);
  for (std::size_t m = 0; m < M; ++m)
    for (int j : groups.server_groups[m]) r.server_type[j] = static_cast<int>(m);

  r.block_sizes.assign(H, std::vector<int>(M, 0));
  for (std::size_t h = 0; h < H; ++h)
    for (std::size_t m = 0; m < M; ++m) {
      if (plan.p(h, m) == 0.0) continue;
      const double share =
          plan.lambda_h[h] * plan.p(h, m) / plan.mu_star(h, m) + eps.eps(h, m);
      r.block_sizes[h][m] = static_cast<int>(std::floor(static_cast<double>(N) * share));
    }

  r.block_h.assign(N, -1);
  r.block_m.assign(N, -1);
  r.block_servers.assign(H, std::vector<std::vector<int>>(M));
  r.class_domain.assign(H, {});
  r.unreserved_per_type.assign(M, 0);
  for (std::size_t m = 0; m < M; ++m) {
    const auto& pool = groups.server_groups[m];  // ascending index order
    long need = 0;
    for (std::size_t h = 0; h < H; ++h) need += r.block_sizes[h][m];
    if (need > static_cast<long>(pool.size()))
      throw std::runtime_error(
          "icrd_reserve: server type " + std::to_string(m) + " needs " + std::to_string(need) +
          " reserved servers but only has " + std::to_string(pool.size()) +
          " (shortfall " + std::to_string(need - static_cast<long>(pool.size())) +
          "); shrink eps and retry");
    std::size_t next = 0;
    for (std::size_t h = 0; h < H; ++h) {
      for (int c = 0; c < r.block_sizes[h][m]; ++c) {
        int j = pool[next++];
        r.block_h[j] = static_cast<int>(h);
        r.block_m[j] = static_cast<int>(m);
        r.block_servers[h][m].push_back(j);
        r.class_domain[h].push_back(j);
      }
    }
    r.unreserved_per_type[m] = static_cast<int>(pool.size() - next);
  }
  for (auto& domain : r.class_domain) std::sort(domain.begin(), domain.end());
  return r;
}

double Policy::effective_rate(std::size_t i, std::size_t j) const { return instance_->rate(i, j); }

const char* PolicySpec::kind_name(Kind k) {
  switch (k) {
    case Kind::RandomOpenLoop: return "random";
    case Kind::Jiq: return "jiq";
    case Kind::Jfiq: return "jfiq";
    case Kind::Jfsq: return "jfsq";
    case Kind::MinDrift: return "mindrift";
    case Kind::PBasedJiq: return "p_based_jiq";
    case Kind::IcrdJiq: return "icrd_jiq";
  }
  return "?";
}

namespace {

std::vector<std::vector<int>> build_compat_lists(const SystemInstance& g) {
  std::vector<std::vector<int>> compat(g.num_dispatchers());
  for (std::size_t i = 0; i < g.num_dispatchers(); ++i)
    for (std::size_t j = 0; j < g.num_servers(); ++j)
      if (g.rate(i, j) > 0.0) compat[i].push_back(static_cast<int>(j));
  return compat;
}

// Shared machinery for policies that sample a target server type from a
// routing-matrix row.
struct TypeSampler {
  RoutingMatrix p;
  std::vector<int> dispatcher_class;
  std::vector<std::vector<int>> servers_of_type;
  std::vector<double> v_breaks;

  TypeSampler(const SystemInstance& g, const PolicySpec& spec, const char* who) {
    if (!spec.p) throw std::invalid_argument(std::string(who) + ": routing matrix p required");
    p = *spec.p;
    if (spec.w_breaks.empty() || spec.v_breaks.empty())
      throw std::invalid_argument(std::string(who) + ": w_breaks and v_breaks required");
    IndexGroups groups = group_indices(g, spec.w_breaks, spec.v_breaks);
    if (groups.dispatcher_groups.size() != p.task_classes() ||
        groups.server_groups.size() != p.server_types())
      throw std::invalid_argument(std::string(who) + ": p shape does not match the partitions");
    v_breaks = spec.v_breaks;
    dispatcher_class.assign(g.num_dispatchers(), -1);
    for (std::size_t h = 0; h < groups.dispatcher_groups.size(); ++h)
      for (int i : groups.dispatcher_groups[h]) dispatcher_class[i] = static_cast<int>(h);
    servers_of_type.resize(groups.server_groups.size());
    for (std::size_t m = 0; m < groups.server_groups.size(); ++m)
      servers_of_type[m] = groups.server_groups[m];
    for (std::size_t h = 0; h < p.task_classes(); ++h)
      for (std::size_t m = 0; m < p.server_types(); ++m)
        if (p(h, m) > 0.0 && servers_of_type[m].empty())
          throw std::invalid_argument(std::string(who) + ": p places mass on empty server type " +
                                      std::to_string(m));
  }

  int sample_type(int dispatcher, Rng& rng) const {
    const int h = dispatcher_class[dispatcher];
    const std::size_t M = p.server_types();
    double u = rng.uniform();
    for (std::size_t m = 0; m < M; ++m) {
      u -= p(h, m);
      if (u < 0.0) return static_cast<int>(m);
    }
    for (std::size_t m = M; m-- > 0;)
      if (p(h, m) > 0.0) return static_cast<int>(m);
    throw std::logic_error("TypeSampler: all-zero p row");
  }
};

class RandomOpenLoopPolicy final : public Policy {
 public:
  RandomOpenLoopPolicy(const SystemInstance& g, const PolicySpec& spec)
      : Policy(g), sampler_(g, spec, "random open-loop") {}

  std::string name() const override { return "random"; }

  int route(const SimStateView&, int dispatcher, Rng& rng) const override {
    const auto& pool = sampler_.servers_of_type[sampler_.sample_type(dispatcher, rng)];
    return pool[rng.uniform_int(pool.size())];
  }

 private:
  TypeSampler sampler_;
};

class JiqPolicy final : public Policy {
 public:
  explicit JiqPolicy(const SystemInstance& g) : Policy(g), compat_(build_compat_lists(g)) {}

  std::string name() const override { return "jiq"; }

  int route(const SimStateView& state, int dispatcher, Rng& rng) const override {
    const auto& candidates = compat_[dispatcher];
    // uniform among idle compatible servers via single-pass reservoir
    int chosen = -1, seen = 0;
    for (int j : candidates)
      if (state.queue_len(j) == 0 && rng.uniform_int(++seen) == 0) chosen = j;
    if (chosen >= 0) return chosen;
    return candidates[rng.uniform_int(candidates.size())];
  }

 private:
  std::vector<std::vector<int>> compat_;
};

class JfiqPolicy final : public Policy {
 public:
  explicit JfiqPolicy(const SystemInstance& g) : Policy(g), compat_(build_compat_lists(g)) {}

  std::string name() const override { return "jfiq"; }

  int route(const SimStateView& state, int dispatcher, Rng& rng) const override {
    const auto& candidates = compat_[dispatcher];
    // fastest idle first
    int chosen = -1, ties = 0;
    double best = -1.0;
    for (int j : candidates) {
      if (state.queue_len(j) != 0) continue;
      const double mu = instance().rate(dispatcher, j);
      if (mu > best) {
        best = mu;
        chosen = j;
        ties = 1;
      } else if (mu == best && rng.uniform_int(++ties) == 0) {
        chosen = j;
      }
    }
    if (chosen >= 0) return chosen;
    // no idle server: fastest rate, then shorter queue, then uniform
    best = -1.0;
    int best_queue = 0;
    for (int j : candidates) {
      const double mu = instance().rate(dispatcher, j);
      const int z = state.queue_len(j);
      if (mu > best || (mu == best && z < best_queue)) {
        best = mu;
        best_queue = z;
        chosen = j;
        ties = 1;
      } else if (mu == best && z == best_queue && rng.uniform_int(++ties) == 0) {
        chosen = j;
      }
    }
    return chosen;
  }

 private:
  std::vector<std::vector<int>> compat_;
};

class JfsqPolicy final : public Policy {
 public:
  explicit JfsqPolicy(const SystemInstance& g) : Policy(g), compat_(build_compat_lists(g)) {}

  std::string name() const override { return "jfsq"; }

  int route(const SimStateView& state, int dispatcher, Rng& rng) const override {
    const auto& candidates = compat_[dispatcher];
    // shortest queue first, fastest rate among those, then uniform
    int chosen = -1, ties = 0;
    int best_queue = std::numeric_limits<int>::max();
    double best = -1.0;
    for (int j : candidates) {
      const int z = state.queue_len(j);
      const double mu = instance().rate(dispatcher, j);
      if (z < best_queue || (z == best_queue && mu > best)) {
        best_queue = z;
        best = mu;
        chosen = j;
        ties = 1;
      } else if (z == best_queue && mu == best && rng.uniform_int(++ties) == 0) {
        chosen = j;
      }
    }
    return chosen;
  }

 private:
  std::vector<std::vector<int>> compat_;
};

class MinDriftPolicy final : public Policy {
 public:
  explicit MinDriftPolicy(const SystemInstance& g) : Policy(g), compat_(build_compat_lists(g)) {}

  std::string name() const override { return "mindrift"; }

  int route(const SimStateView& state, int dispatcher, Rng& rng) const override {
    const auto& candidates = compat_[dispatcher];
    int chosen = -1, ties = 0;
    double best = std::numeric_limits<double>::infinity();
    for (int j : candidates) {
      const double ratio = state.weighted_queue(j) / instance().rate(dispatcher, j);
      if (ratio < best) {
        best = ratio;
        chosen = j;
        ties = 1;
      } else if (ratio == best && rng.uniform_int(++ties) == 0) {
        chosen = j;
      }
    }
    return chosen;
  }

 private:
  std::vector<std::vector<int>> compat_;
};

class PBasedJiqPolicy final : public Policy {
 public:
  PBasedJiqPolicy(const SystemInstance& g, const PolicySpec& spec)
      : Policy(g), sampler_(g, spec, "p-based JIQ") {
    // When routed cells have an exactly known minimum rate, insist it is
    // positive so the policy can never hit an incompatible server.
    if (std::holds_alternative<StepwiseRateFunction>(g.f())) {
      auto env = lower_envelope(g.f(), spec.w_breaks, spec.v_breaks);
      for (std::size_t h = 0; h < sampler_.p.task_classes(); ++h)
        for (std::size_t m = 0; m < sampler_.p.server_types(); ++m)
          if (sampler_.p(h, m) > 0.0 && !(env.rates(h, m) > 0.0))
            throw std::invalid_argument(
                "p-based JIQ: p places mass on a cell with zero minimum rate");
    }
  }

  std::string name() const override { return "p_based_jiq"; }
  const std::vector<double>* type_breaks() const override { return &sampler_.v_breaks; }

  int route(const SimStateView& state, int dispatcher, Rng& rng) const override {
    const int m = sampler_.sample_type(dispatcher, rng);
    const IndexedSet& idle = state.idle_in_type(m);
    if (!idle.empty()) return idle.sample(rng);
    // committed to the sampled type even when it has no idle server
    const auto& pool = sampler_.servers_of_type[m];
    return pool[rng.uniform_int(pool.size())];
  }

 private:
  TypeSampler sampler_;
};

class IcrdJiqPolicy final : public Policy {
 public:
  IcrdJiqPolicy(const SystemInstance& g, const ReservationPlan& r) : Policy(g), plan_(&r) {
    for (std::size_t h = 0; h < r.task_classes(); ++h) {
      bool class_has_dispatcher = false;
      for (int c : r.dispatcher_class)
        if (c == static_cast<int>(h)) {
          class_has_dispatcher = true;
          break;
        }
      if (class_has_dispatcher && r.class_domain[h].empty())
        throw std::invalid_argument("ICRD JIQ: class " + std::to_string(h) +
                                    " has dispatchers but no reserved servers");
    }
  }

  std::string name() const override { return "icrd_jiq"; }
  const ReservationPlan* reservation() const override { return plan_; }
  const std::vector<double>* type_breaks() const override { return &plan_->v_breaks; }

  double effective_rate(std::size_t i, std::size_t j) const override {
    return plan_->pruned_rate(instance(), i, j);
  }

  int route(const SimStateView& state, int dispatcher, Rng& rng) const override {
    const int h = plan_->dispatcher_class[dispatcher];
    const IndexedSet& idle = state.idle_in_class_domain(h);
    if (!idle.empty()) return idle.sample(rng);
    const auto& domain = plan_->class_domain[h];
    return domain[rng.uniform_int(domain.size())];
  }

 private:
  const ReservationPlan* plan_;
};

}  // namespace

std::unique_ptr<Policy> make_policy(const PolicySpec& spec, const SystemInstance& g,
                                    const ReservationPlan* reservation) {
  using Kind = PolicySpec::Kind;
  switch (spec.kind) {
    case Kind::RandomOpenLoop: return std::make_unique<RandomOpenLoopPolicy>(g, spec);
    case Kind::Jiq: return std::make_unique<JiqPolicy>(g);
    case Kind::Jfiq: return std::make_unique<JfiqPolicy>(g);
    case Kind::Jfsq: return std::make_unique<JfsqPolicy>(g);
    case Kind::MinDrift: return std::make_unique<MinDriftPolicy>(g);
    case Kind::PBasedJiq: return std::make_unique<PBasedJiqPolicy>(g, spec);
    case Kind::IcrdJiq:
      if (!reservation) throw std::invalid_argument("make_policy: ICRD JIQ needs a reservation");
      return std::make_unique<IcrdJiqPolicy>(g, *reservation);
  }
  throw std::invalid_argument("make_policy: unknown policy kind");
}

}  // namespace hetlb
