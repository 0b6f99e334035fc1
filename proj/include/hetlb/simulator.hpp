#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hetlb/model.hpp"
#include "hetlb/policies.hpp"
#include "hetlb/util.hpp"

namespace hetlb {

enum class InitialState { Empty, AllOne, HalfHalf };

const char* initial_state_name(InitialState s);

struct SimOptions {
  double horizon = 0.0;
  std::uint64_t seed = 0;
  InitialState init = InitialState::Empty;
  std::vector<double> sample_times;  // ascending, all within [0, horizon]
  int queue_cap = 10;                // deepest tail level kept in the trace
  double bad_rate_threshold = 0.5;
  std::vector<double> v_breaks;  // trace grouping; policy grouping wins if unset
  bool debug_checks = false;     // exhaustive state audits at every event
};

struct TraceSample {
  double time = 0.0;
  std::vector<double> xtilde;     // [H][M][L+1] tail fractions, reservation runs only
  std::vector<double> xbar;       // [M][K] busy-at-rate fractions (per total N)
  std::vector<double> busy_frac;  // per type m, busy / |V_m|
  double avg_queue_len = 0.0;     // sum_j Z_j / N
  std::int64_t arrivals = 0, departures = 0;
  std::int64_t busy_assignments = 0, bad_assignments = 0;
  std::vector<std::int64_t> assignments_by_rate;  // per rate class k, + trailing "other"
};

struct Trace {
  std::size_t num_servers = 0, num_dispatchers = 0;
  double horizon = 0.0;
  std::uint64_t seed = 0;
  InitialState init = InitialState::Empty;
  std::int64_t preloaded = 0;

  int task_classes = 0;   // H (0 when no reservation)
  int server_types = 1;   // M
  int queue_cap = 10;     // L
  std::vector<double> mu_k;       // rate value per k column of xbar
  std::vector<double> v_breaks;   // grouping used
  std::vector<int> group_sizes;   // |V_m|
  double bad_rate_threshold = 0.5;

  std::vector<TraceSample> samples;

  // terminal snapshot
  std::vector<int> final_queue_len;
  std::vector<double> final_weighted_queue;

  std::size_t xt_index(int h, int m, int l) const {
    return (static_cast<std::size_t>(h) * server_types + m) * (queue_cap + 1) + l;
  }
  std::size_t xbar_index(int m, int k) const {
    return static_cast<std::size_t>(m) * mu_k.size() + k;
  }
};

// Exact continuous-time simulation of the instance under the policy: Poisson
// arrivals per dispatcher, exponential FCFS service at the head-of-line rate,
// all randomness from one seeded stream.
Trace simulate(const SystemInstance& g, const Policy& policy, const SimOptions& opts);

struct SteadyStateEstimate {
  double window_start = 0.0, window_end = 0.0;
  double queueing_probability = 0.0;  // busy assignments / arrivals, post warmup
  double bad_probability = 0.0;       // assignments below the rate threshold
  double avg_queue_len = 0.0;
  std::vector<double> busy_frac_mean;  // per m
  std::vector<double> xtilde_mean;     // same layout as TraceSample::xtilde
  std::vector<double> xbar_mean;       // same layout as TraceSample::xbar
  std::int64_t arrivals_in_window = 0;

  std::map<std::string, double> flat(const Trace& t) const;
};

SteadyStateEstimate steady_state_estimate(const Trace& trace, double warmup_fraction,
                                          std::optional<double> bad_threshold = std::nullopt);

std::vector<double> uniform_sample_times(double horizon, double dt);

}  // namespace hetlb
