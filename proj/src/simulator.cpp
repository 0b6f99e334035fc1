#include "hetlb/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

namespace hetlb {

const char* initial_state_name(InitialState s) {
  switch (s) {
    case InitialState::Empty: return "empty";
    case InitialState::AllOne: return "all_one";
    case InitialState::HalfHalf: return "half_half";
  }
  return "?";
}

std::vector<double> uniform_sample_times(double horizon, double dt) {
  std::vector<double> times;
  for (double t = 0.0; t <= horizon + 1e-12; t += dt) times.push_back(std::min(t, horizon));
  if (times.empty() || times.back() < horizon) times.push_back(horizon);
  return times;
}

namespace {

// Segment tree over nonnegative event rates with O(log n) update and
// proportional sampling. Sums are recomputed from children on every update,
// so there is no cumulative drift.
class RateIndex {
 public:
  explicit RateIndex(std::size_t n) : n_(n) {
    size_ = 1;
    while (size_ < n_) size_ <<= 1;
    node_.assign(2 * size_, 0.0);
  }

  void set(std::size_t i, double r) {
    std::size_t k = size_ + i;
    node_[k] = r;
    for (k >>= 1; k >= 1; k >>= 1) node_[k] = node_[2 * k] + node_[2 * k + 1];
  }

  double total() const { return node_[1]; }

  std::size_t sample(double u) const {
    std::size_t k = 1;
    while (k < size_) {
      k <<= 1;
      if (u >= node_[k]) {
        u -= node_[k];
        k += 1;
      }
    }
    std::size_t i = k - size_;
    // Rounding can land on a zero-rate leaf; walk to the nearest active one.
    if (node_[size_ + i] <= 0.0) {
      for (std::size_t d = 1; d < n_; ++d) {
        if (i >= d && node_[size_ + i - d] > 0.0) return i - d;
        if (i + d < n_ && node_[size_ + i + d] > 0.0) return i + d;
      }
      throw std::logic_error("RateIndex::sample: no active rate");
    }
    return i;
  }

 private:
  std::size_t n_, size_ = 1;
  std::vector<double> node_;
};

class Simulation final : public SimStateView {
 public:
  Simulation(const SystemInstance& g, const Policy& policy, const SimOptions& opts)
      : g_(g), policy_(policy), opts_(opts), rng_(opts.seed) {
    const std::size_t N = g.num_servers(), W = g.num_dispatchers();
    if (!(opts.horizon > 0.0)) throw std::invalid_argument("simulate: horizon must be positive");
    for (double t : opts.sample_times)
      if (t < 0.0 || t > opts.horizon)
        throw std::invalid_argument("simulate: sample time outside [0, horizon]");

    resolve_grouping();
    reservation_ = policy.reservation();

    queues_.resize(N);
    weighted_.assign(N, 0.0);
    head_rate_.assign(N, 0.0);
    head_k_.assign(N, -1);

    mu_k_ = g.distinct_rates();
    const std::size_t K = mu_k_.size();
    busy_count_.assign(M_, 0);
    if (K > 0) xbar_count_.assign(M_ * K, 0);
    assignments_by_rate_.assign(K + 1, 0);

    idle_by_type_.assign(M_, IndexedSet(N));
    for (std::size_t j = 0; j < N; ++j) idle_by_type_[server_type_[j]].insert(static_cast<int>(j));

    if (reservation_) {
      H_ = static_cast<int>(reservation_->task_classes());
      const int L = opts.queue_cap;
      xt_count_.assign(static_cast<std::size_t>(H_) * M_ * (L + 1), 0);
      idle_by_domain_.assign(H_, IndexedSet(N));
      for (int h = 0; h < H_; ++h)
        for (int j : reservation_->class_domain[h]) idle_by_domain_[h].insert(j);
      for (std::size_t j = 0; j < N; ++j)
        if (reservation_->block_h[j] >= 0)
          xt_count_[xt_index(reservation_->block_h[j], reservation_->block_m[j], 0)]++;
    }

    tree_ = std::make_unique<RateIndex>(W + N);
    for (std::size_t i = 0; i < W; ++i) tree_->set(i, g.arrival_rate(i));

    preload();
  }

  // --- SimStateView ---
  int queue_len(int j) const override { return static_cast<int>(queues_[j].size()); }
  double weighted_queue(int j) const override { return weighted_[j]; }
  const IndexedSet& idle_in_type(int m) const override { return idle_by_type_[m]; }
  const IndexedSet& idle_in_class_domain(int h) const override { return idle_by_domain_[h]; }

  Trace run() {
    Trace trace;
    trace.num_servers = g_.num_servers();
    trace.num_dispatchers = g_.num_dispatchers();
    trace.horizon = opts_.horizon;
    trace.seed = opts_.seed;
    trace.init = opts_.init;
    trace.preloaded = preloaded_;
    trace.task_classes = H_;
    trace.server_types = static_cast<int>(M_);
    trace.queue_cap = opts_.queue_cap;
    trace.mu_k = mu_k_;
    trace.v_breaks = v_breaks_;
    trace.group_sizes = group_sizes_;
    trace.bad_rate_threshold = opts_.bad_rate_threshold;
    trace.samples.reserve(opts_.sample_times.size());

    double t = 0.0;
    std::size_t next_sample = 0;

    for (;;) {
      const double total = tree_->total();
      double t_next = total > 0.0 ? t + rng_.exponential(total) : opts_.horizon + 1.0;

      while (next_sample < opts_.sample_times.size() &&
             opts_.sample_times[next_sample] <= std::min(t_next, opts_.horizon)) {
        record_sample(trace, opts_.sample_times[next_sample]);
        ++next_sample;
      }
      if (t_next > opts_.horizon) break;
      t = t_next;

      const std::size_t idx = tree_->sample(rng_.uniform() * total);
      if (idx < g_.num_dispatchers())
        handle_arrival(static_cast<int>(idx));
      else
        handle_departure(static_cast<int>(idx - g_.num_dispatchers()));

      if (opts_.debug_checks) audit();
      check_conservation();
    }

    trace.final_queue_len.resize(g_.num_servers());
    trace.final_weighted_queue = weighted_;
    for (std::size_t j = 0; j < g_.num_servers(); ++j)
      trace.final_queue_len[j] = static_cast<int>(queues_[j].size());
    return trace;
  }

 private:
  std::size_t xt_index(int h, int m, int l) const {
    return (static_cast<std::size_t>(h) * M_ + m) * (opts_.queue_cap + 1) + l;
  }

  void resolve_grouping() {
    const std::vector<double>* policy_breaks = policy_.type_breaks();
    if (!opts_.v_breaks.empty()) {
      v_breaks_ = opts_.v_breaks;
      if (policy_breaks && *policy_breaks != v_breaks_)
        throw std::invalid_argument("simulate: trace v_breaks conflict with the policy's grouping");
    } else if (policy_breaks) {
      v_breaks_ = *policy_breaks;
    } else {
      v_breaks_ = {0.0, 1.0};
    }
    validate_breaks(v_breaks_, "v_breaks");
    M_ = v_breaks_.size() - 1;
    server_type_.resize(g_.num_servers());
    group_sizes_.assign(M_, 0);
    for (std::size_t j = 0; j < g_.num_servers(); ++j) {
      server_type_[j] = static_cast<int>(interval_of(v_breaks_, g_.server_coord(j)));
      group_sizes_[server_type_[j]]++;
    }
  }

  int rate_class(double mu) const {
    auto it = std::lower_bound(mu_k_.begin(), mu_k_.end(), mu);
    if (it != mu_k_.end() && *it == mu) return static_cast<int>(it - mu_k_.begin());
    return -1;
  }

  void preload() {
    if (opts_.init == InitialState::Empty) return;
    for (std::size_t j = 0; j < g_.num_servers(); ++j) {
      if (opts_.init == InitialState::HalfHalf && j % 2 != 0) continue;
      int type = pick_compatible_type(static_cast<int>(j));
      if (type < 0) continue;  // no compatible dispatcher under the effective rates
      enqueue(type, static_cast<int>(j));
      ++preloaded_;
    }
  }

  // Uniform over dispatchers with positive effective rate at j, one pass.
  int pick_compatible_type(int j) {
    int chosen = -1, seen = 0;
    for (std::size_t i = 0; i < g_.num_dispatchers(); ++i)
      if (policy_.effective_rate(i, j) > 0.0 && rng_.uniform_int(++seen) == 0)
        chosen = static_cast<int>(i);
    return chosen;
  }

  void handle_arrival(int dispatcher) {
    ++arrivals_;
    const int j = policy_.route(*this, dispatcher, rng_);
    const double mu = g_.rate(dispatcher, j);
    if (opts_.debug_checks) {
      if (!(policy_.effective_rate(dispatcher, j) > 0.0))
        throw std::logic_error("simulate: policy routed to an incompatible server");
      if (reservation_ && reservation_->block_h[j] != reservation_->dispatcher_class[dispatcher])
        throw std::logic_error("simulate: ICRD routed a task outside its class domain");
    }
    if (!queues_[j].empty()) ++busy_assignments_;
    if (mu < opts_.bad_rate_threshold) ++bad_assignments_;
    const int k = rate_class(mu);
    ++assignments_by_rate_[k >= 0 ? static_cast<std::size_t>(k) : mu_k_.size()];
    enqueue(dispatcher, j);
  }

  void enqueue(int dispatcher, int j) {
    const bool was_idle = queues_[j].empty();
    queues_[j].push_back(dispatcher);
    weighted_[j] += 1.0 / g_.rate(dispatcher, j);
    ++total_in_system_;

    const int z = static_cast<int>(queues_[j].size());
    if (reservation_ && reservation_->block_h[j] >= 0 && z <= opts_.queue_cap)
      xt_count_[xt_index(reservation_->block_h[j], reservation_->block_m[j], z)]++;

    if (was_idle) {
      set_serving(j, dispatcher);
      const int m = server_type_[j];
      busy_count_[m]++;
      idle_by_type_[m].erase(j);
      if (reservation_ && reservation_->block_h[j] >= 0)
        idle_by_domain_[reservation_->block_h[j]].erase(j);
    }
  }

  void handle_departure(int j) {
    const int done_type = queues_[j].front();
    queues_[j].pop_front();
    ++departures_;
    --total_in_system_;
    weighted_[j] -= 1.0 / g_.rate(done_type, j);

    const int z_before = static_cast<int>(queues_[j].size()) + 1;
    if (reservation_ && reservation_->block_h[j] >= 0 && z_before <= opts_.queue_cap)
      xt_count_[xt_index(reservation_->block_h[j], reservation_->block_m[j], z_before)]--;

    const int m = server_type_[j];
    if (!queues_[j].empty()) {
      set_serving(j, queues_[j].front());  // retires the old rate class itself
    } else {
      if (head_k_[j] >= 0) xbar_count_[static_cast<std::size_t>(m) * mu_k_.size() + head_k_[j]]--;
      weighted_[j] = 0.0;  // exact reset, kills float drift
      head_rate_[j] = 0.0;
      head_k_[j] = -1;
      tree_->set(g_.num_dispatchers() + j, 0.0);
      busy_count_[m]--;
      idle_by_type_[m].insert(j);
      if (reservation_ && reservation_->block_h[j] >= 0)
        idle_by_domain_[reservation_->block_h[j]].insert(j);
    }
  }

  // Sets the service clock and rate-class bookkeeping for the new head task.
  void set_serving(int j, int head_type) {
    const double mu = g_.rate(head_type, j);
    head_rate_[j] = mu;
    const int k = rate_class(mu);
    const int m = server_type_[j];
    if (head_k_[j] >= 0) xbar_count_[static_cast<std::size_t>(m) * mu_k_.size() + head_k_[j]]--;
    head_k_[j] = k;
    if (k >= 0) xbar_count_[static_cast<std::size_t>(m) * mu_k_.size() + k]++;
    tree_->set(g_.num_dispatchers() + j, mu);
  }

  void record_sample(Trace& trace, double t) {
    TraceSample s;
    s.time = t;
    const double N = static_cast<double>(g_.num_servers());
    if (reservation_) {
      s.xtilde.resize(xt_count_.size());
      for (std::size_t i = 0; i < xt_count_.size(); ++i) s.xtilde[i] = xt_count_[i] / N;
    }
    if (!mu_k_.empty()) {
      s.xbar.resize(xbar_count_.size());
      for (std::size_t i = 0; i < xbar_count_.size(); ++i) s.xbar[i] = xbar_count_[i] / N;
    }
    s.busy_frac.resize(M_);
    for (std::size_t m = 0; m < M_; ++m)
      s.busy_frac[m] = group_sizes_[m] > 0 ? static_cast<double>(busy_count_[m]) / group_sizes_[m]
                                           : 0.0;
    s.avg_queue_len = total_in_system_ / N;
    s.arrivals = arrivals_;
    s.departures = departures_;
    s.busy_assignments = busy_assignments_;
    s.bad_assignments = bad_assignments_;
    s.assignments_by_rate = assignments_by_rate_;
    trace.samples.push_back(std::move(s));
  }

  void check_conservation() const {
    if (preloaded_ + arrivals_ != departures_ + total_in_system_)
      throw std::logic_error("simulate: conservation violated (arrivals != departures + queued)");
  }

  // Exhaustive audit of the incremental structures, debug runs only.
  void audit() const {
    for (std::size_t j = 0; j < g_.num_servers(); ++j) {
      double q = 0.0;
      for (int type : queues_[j]) q += 1.0 / g_.rate(type, j);
      if (std::abs(q - weighted_[j]) > 1e-9)
        throw std::logic_error("simulate: weighted queue drift at server " + std::to_string(j));
      const bool idle = queues_[j].empty();
      if (idle_by_type_[server_type_[j]].contains(static_cast<int>(j)) != idle)
        throw std::logic_error("simulate: idle set incoherent at server " + std::to_string(j));
    }
    if (reservation_) {
      for (int h = 0; h < H_; ++h)
        for (std::size_t m = 0; m < M_; ++m)
          for (int l = 0; l < opts_.queue_cap; ++l)
            if (xt_count_[xt_index(h, static_cast<int>(m), l)] <
                xt_count_[xt_index(h, static_cast<int>(m), l + 1)])
              throw std::logic_error("simulate: tail counts not monotone");
    }
  }

  const SystemInstance& g_;
  const Policy& policy_;
  const SimOptions& opts_;
  Rng rng_;

  std::vector<double> v_breaks_;
  std::size_t M_ = 1;
  int H_ = 0;
  std::vector<int> server_type_;
  std::vector<int> group_sizes_;
  const ReservationPlan* reservation_ = nullptr;

  std::vector<std::deque<int>> queues_;
  std::vector<double> weighted_;
  std::vector<double> head_rate_;
  std::vector<int> head_k_;
  std::vector<double> mu_k_;

  std::vector<IndexedSet> idle_by_type_;
  std::vector<IndexedSet> idle_by_domain_;
  std::vector<int> busy_count_;
  std::vector<int> xbar_count_;
  std::vector<int> xt_count_;

  std::unique_ptr<RateIndex> tree_;

  std::int64_t arrivals_ = 0, departures_ = 0, busy_assignments_ = 0, bad_assignments_ = 0;
  std::vector<std::int64_t> assignments_by_rate_;
  std::int64_t total_in_system_ = 0, preloaded_ = 0;
};

}  // namespace

Trace simulate(const SystemInstance& g, const Policy& policy, const SimOptions& opts) {
  Simulation sim(g, policy, opts);
  return sim.run();
}

SteadyStateEstimate steady_state_estimate(const Trace& trace, double warmup_fraction,
                                          std::optional<double> bad_threshold) {
  if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0))
    throw std::invalid_argument("steady_state_estimate: warmup_fraction must be in [0,1)");
  const double t0 = warmup_fraction * trace.horizon;

  std::size_t first = 0;
  while (first < trace.samples.size() && trace.samples[first].time < t0) ++first;
  if (first >= trace.samples.size())
    throw std::invalid_argument("steady_state_estimate: empty post-warmup window");

  SteadyStateEstimate est;
  est.window_start = trace.samples[first].time;
  est.window_end = trace.horizon;

  // Time-weighted means, treating the state as constant between samples.
  const std::size_t n = trace.samples.size();
  double total_weight = 0.0;
  est.busy_frac_mean.assign(trace.server_types, 0.0);
  est.xtilde_mean.assign(trace.samples[first].xtilde.size(), 0.0);
  est.xbar_mean.assign(trace.samples[first].xbar.size(), 0.0);
  for (std::size_t s = first; s < n; ++s) {
    const auto& cur = trace.samples[s];
    const double until = s + 1 < n ? trace.samples[s + 1].time : trace.horizon;
    const double weight = std::max(0.0, until - cur.time);
    total_weight += weight;
    est.avg_queue_len += weight * cur.avg_queue_len;
    for (std::size_t m = 0; m < cur.busy_frac.size(); ++m)
      est.busy_frac_mean[m] += weight * cur.busy_frac[m];
    for (std::size_t i = 0; i < cur.xtilde.size(); ++i)
      est.xtilde_mean[i] += weight * cur.xtilde[i];
    for (std::size_t i = 0; i < cur.xbar.size(); ++i) est.xbar_mean[i] += weight * cur.xbar[i];
  }
  if (total_weight > 0.0) {
    est.avg_queue_len /= total_weight;
    for (auto& v : est.busy_frac_mean) v /= total_weight;
    for (auto& v : est.xtilde_mean) v /= total_weight;
    for (auto& v : est.xbar_mean) v /= total_weight;
  } else {
    // Window holds a single instant (sample at the horizon): use it as-is.
    const auto& last = trace.samples.back();
    est.avg_queue_len = last.avg_queue_len;
    est.busy_frac_mean = last.busy_frac;
    est.xtilde_mean = last.xtilde;
    est.xbar_mean = last.xbar;
  }

  // Counter deltas over the window.
  const auto& w0 = trace.samples[first];
  const auto& w1 = trace.samples.back();
  const std::int64_t arrivals = w1.arrivals - w0.arrivals;
  est.arrivals_in_window = arrivals;
  est.queueing_probability =
      arrivals > 0 ? static_cast<double>(w1.busy_assignments - w0.busy_assignments) / arrivals
                   : 0.0;
  if (bad_threshold && !trace.mu_k.empty()) {
    std::int64_t bad = 0;
    for (std::size_t k = 0; k < trace.mu_k.size(); ++k)
      if (trace.mu_k[k] < *bad_threshold)
        bad += w1.assignments_by_rate[k] - w0.assignments_by_rate[k];
    est.bad_probability = arrivals > 0 ? static_cast<double>(bad) / arrivals : 0.0;
  } else {
    est.bad_probability =
        arrivals > 0 ? static_cast<double>(w1.bad_assignments - w0.bad_assignments) / arrivals
                     : 0.0;
  }
  return est;
}

std::map<std::string, double> SteadyStateEstimate::flat(const Trace& t) const {
  std::map<std::string, double> kv;
  kv["queueing_probability"] = queueing_probability;
  kv["bad_probability"] = bad_probability;
  kv["avg_queue_len"] = avg_queue_len;
  kv["arrivals_in_window"] = static_cast<double>(arrivals_in_window);
  kv["window_start"] = window_start;
  kv["window_end"] = window_end;
  for (std::size_t m = 0; m < busy_frac_mean.size(); ++m)
    kv["busy_frac[" + std::to_string(m) + "]"] = busy_frac_mean[m];
  for (int h = 0; h < t.task_classes; ++h)
    for (int m = 0; m < t.server_types; ++m)
      for (int l = 0; l <= t.queue_cap; ++l)
        kv["xtilde[" + std::to_string(h) + "][" + std::to_string(m) + "][" + std::to_string(l) +
           "]"] = xtilde_mean[t.xt_index(h, m, l)];
  for (int m = 0; m < t.server_types && !t.mu_k.empty(); ++m)
    for (std::size_t k = 0; k < t.mu_k.size(); ++k)
      kv["xbar[" + std::to_string(m) + "][" + std::to_string(k) + "]"] =
          xbar_mean[t.xbar_index(m, static_cast<int>(k))];
  return kv;
}

}  // namespace hetlb
