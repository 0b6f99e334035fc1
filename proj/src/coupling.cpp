#include "hetlb/coupling.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>

namespace hetlb {

namespace {

struct CoupledState {
  std::vector<std::deque<int>> g_queue;  // task types, head first (rates vary)
  std::vector<int> gp_len;               // G' needs lengths only (block-constant rates)
  std::vector<IndexedSet> g_idle;        // per class domain
  std::vector<IndexedSet> gp_idle;
};

}  // namespace

CouplingResult coupled_dominance_run(const SystemInstance& g, const SystemInstance& g_prime,
                                     const PartitionPlan& plan, const EpsilonAllocation& eps,
                                     const CouplingOptions& opts) {
  const std::size_t N = g.num_servers(), W = g.num_dispatchers();
  if (g_prime.num_servers() != N || g_prime.num_dispatchers() != W)
    throw std::invalid_argument("coupled_dominance_run: system sizes differ");
  for (std::size_t j = 0; j < N; ++j)
    if (g.server_coord(j) != g_prime.server_coord(j))
      throw std::invalid_argument("coupled_dominance_run: server coordinates differ");
  for (std::size_t i = 0; i < W; ++i) {
    if (g.dispatcher_coord(i) != g_prime.dispatcher_coord(i))
      throw std::invalid_argument("coupled_dominance_run: dispatcher coordinates differ");
    if (g.arrival_rate(i) != g_prime.arrival_rate(i))
      throw std::invalid_argument("coupled_dominance_run: arrival rates differ");
  }
  if (!(opts.horizon > 0.0))
    throw std::invalid_argument("coupled_dominance_run: horizon must be positive");

  // One reservation drives both prunings (coordinates agree, so blocks agree).
  const ReservationPlan res = icrd_reserve(g, plan, eps);
  const std::size_t H = res.task_classes(), M = res.server_types();

  // Precondition: on every reserved edge, G' runs exactly at the block's
  // envelope rate and G at least that fast.
  for (std::size_t h = 0; h < H; ++h) {
    for (std::size_t i = 0; i < W; ++i) {
      if (res.dispatcher_class[i] != static_cast<int>(h)) continue;
      for (int j : res.class_domain[h]) {
        const double mu_prime = g_prime.rate(i, j);
        const double mu_block = res.block_rate(h, res.block_m[j]);
        if (std::abs(mu_prime - mu_block) > 1e-12)
          throw std::invalid_argument(
              "coupled_dominance_run: G' rate differs from the block envelope rate");
        if (g.rate(i, j) < mu_prime - 1e-12)
          throw std::invalid_argument("coupled_dominance_run: rate ordering violated (f' > f)");
      }
    }
  }

  Rng rng(opts.seed);
  CoupledState st;
  st.g_queue.resize(N);
  st.gp_len.assign(N, 0);
  st.g_idle.assign(H, IndexedSet(N));
  st.gp_idle.assign(H, IndexedSet(N));
  for (std::size_t h = 0; h < H; ++h)
    for (int j : res.class_domain[h]) {
      st.g_idle[h].insert(j);
      st.gp_idle[h].insert(j);
    }

  // Coupled clock per server: when G is busy it rings at G's head rate and
  // G' departures are thinned off it; when only G' is busy it rings at the
  // block rate on its own.
  std::vector<double> clock(N, 0.0);
  std::vector<double> arrival_rates(W);
  double total_arrival = 0.0;
  for (std::size_t i = 0; i < W; ++i) {
    arrival_rates[i] = g.arrival_rate(i);
    total_arrival += arrival_rates[i];
  }

  auto refresh_clock = [&](int j) {
    if (!st.g_queue[j].empty())
      clock[j] = g.rate(st.g_queue[j].front(), j);
    else if (st.gp_len[j] > 0)
      clock[j] = res.block_rate(res.block_h[j], res.block_m[j]);
    else
      clock[j] = 0.0;
  };

  CouplingResult result;

  auto check_dominance = [&](double t) {
    std::vector<int> a, b;
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t m = 0; m < M; ++m) {
        const auto& block = res.block_servers[h][m];
        if (block.empty()) continue;
        a.clear();
        b.clear();
        for (int j : block) {
          a.push_back(static_cast<int>(st.g_queue[j].size()));
          b.push_back(st.gp_len[j]);
        }
        std::sort(a.begin(), a.end(), std::greater<int>());
        std::sort(b.begin(), b.end(), std::greater<int>());
        for (std::size_t r = 0; r < a.size(); ++r) {
          if (a[r] > b[r]) {
            ++result.violation_count;
            result.dominance_held = false;
            if (result.violations.size() < opts.max_violations_logged)
              result.violations.push_back(
                  {t, static_cast<int>(h), static_cast<int>(m),
                   "rank " + std::to_string(r) + ": G=" + std::to_string(a[r]) +
                       " > G'=" + std::to_string(b[r])});
            break;
          }
        }
      }
  };

  auto g_assign = [&](int h, int j, int task_type) {
    const bool was_idle = st.g_queue[j].empty();
    st.g_queue[j].push_back(task_type);
    if (was_idle) st.g_idle[h].erase(j);
    refresh_clock(j);
  };
  auto gp_assign = [&](int h, int j) {
    if (st.gp_len[j] == 0) st.gp_idle[h].erase(j);
    st.gp_len[j]++;
    refresh_clock(j);
  };

  double t = 0.0;
  for (;;) {
    double total = total_arrival;
    for (std::size_t j = 0; j < N; ++j) total += clock[j];
    if (!(total > 0.0)) break;
    t += rng.exponential(total);
    if (t > opts.horizon) break;
    ++result.events;

    double u = rng.uniform() * total;
    if (u < total_arrival) {
      // --- coupled arrival ---
      std::size_t i = 0;
      while (i + 1 < W && u >= arrival_rates[i]) u -= arrival_rates[i], ++i;
      const int h = res.dispatcher_class[i];
      if (h < 0) continue;  // dispatcher outside every class: cannot happen with valid breaks
      auto& gi = st.g_idle[h];
      auto& gpi = st.gp_idle[h];
      const auto& domain = res.class_domain[h];
      if (!gi.empty() && !gpi.empty()) {
        const int j = gi.sample(rng);
        g_assign(h, j, static_cast<int>(i));
        if (gpi.contains(j))
          gp_assign(h, j);
        else
          gp_assign(h, gpi.sample(rng));
      } else if (!gi.empty()) {
        // G finds an idle server, G' is saturated: route independently.
        g_assign(h, gi.sample(rng), static_cast<int>(i));
        gp_assign(h, domain[rng.uniform_int(domain.size())]);
      } else if (gi.empty() && gpi.empty()) {
        const int j = domain[rng.uniform_int(domain.size())];
        g_assign(h, j, static_cast<int>(i));
        gp_assign(h, j);
      } else {
        // Only G' has idle servers: impossible while dominance holds, but the
        // mutation mode can get here; keep both systems lawful.
        g_assign(h, domain[rng.uniform_int(domain.size())], static_cast<int>(i));
        gp_assign(h, gpi.sample(rng));
      }
    } else {
      // --- coupled departure ---
      u -= total_arrival;
      std::size_t j = 0;
      while (j + 1 < N && u >= clock[j]) u -= clock[j], ++j;
      const int h = res.block_h[j];
      if (h < 0) continue;
      const double mu_block = res.block_rate(h, res.block_m[j]);
      if (!st.g_queue[j].empty()) {
        const double mu_g = g.rate(st.g_queue[j].front(), j);
        st.g_queue[j].pop_front();
        if (st.g_queue[j].empty()) st.g_idle[h].insert(static_cast<int>(j));
        if (st.gp_len[j] > 0) {
          const bool gp_completes = opts.disable_thinning || rng.uniform() < mu_block / mu_g;
          if (gp_completes) {
            st.gp_len[j]--;
            if (st.gp_len[j] == 0) st.gp_idle[h].insert(static_cast<int>(j));
          }
        }
      } else if (st.gp_len[j] > 0) {
        st.gp_len[j]--;
        if (st.gp_len[j] == 0) st.gp_idle[h].insert(static_cast<int>(j));
      }
      refresh_clock(static_cast<int>(j));
    }

    check_dominance(t);
  }

  return result;
}

}  // namespace hetlb
