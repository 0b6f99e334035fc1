#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "hetlb/config.hpp"
#include "hetlb/coupling.hpp"
#include "hetlb/csv.hpp"
#include "hetlb/fluid.hpp"

namespace hetlb {

// Raised when a run cannot proceed because the system is not subcritical
// (heavy-load or undecided verdict). The CLI maps it to exit codes 3 / 5.
class InfeasibleError : public std::runtime_error {
 public:
  InfeasibleError(Verdict v, const std::string& msg) : std::runtime_error(msg), verdict(v) {}
  Verdict verdict;
};

struct RunContext {
  std::filesystem::path out_dir;
  int workers = 0;  // 0 = hardware concurrency
};

// Subcritical certificate plus the Poly(p) point used for reservations,
// resolved from an explicit partition section or the dyadic search.
struct PlanBundle {
  PartitionPlan plan;
  EpsilonAllocation eps;
};

PlanBundle resolve_plan(const ExperimentConfig& cfg);

// Parallel replications with seeds base_seed, base_seed+1, ...
std::vector<Trace> run_replications(const SystemInstance& g, const Policy& policy,
                                    const SimOptions& base, int replications,
                                    std::uint64_t base_seed, int workers);

struct MeanSe {
  double mean = 0.0, se = 0.0;
};
MeanSe mean_se(const std::vector<double>& xs);

// ---- subcommand drivers ----

struct CheckOutcome {
  PartitionPlan plan;
};
CheckOutcome run_check(const ExperimentConfig& cfg, const RunContext& ctx);

struct ReserveOutcome {
  ReservationPlan reservation;
};
ReserveOutcome run_reserve(const ExperimentConfig& cfg, const RunContext& ctx);

struct PolicyResult {
  std::string policy;
  std::vector<SteadyStateEstimate> reps;
  std::vector<double> final_avg_queue;  // avg queue length at the horizon, per rep
  MeanSe queueing_probability, bad_probability, avg_queue_len, final_queue;
};

struct SimulateOutcome {
  PolicyResult result;
};
SimulateOutcome run_simulate(const ExperimentConfig& cfg, const RunContext& ctx);

struct CompareOutcome {
  std::vector<PolicyResult> policies;
};
CompareOutcome run_compare(const ExperimentConfig& cfg, const RunContext& ctx);

struct ScalingRow {
  std::size_t N = 0;
  std::string policy;
  MeanSe queueing_probability;
  std::vector<double> sup_busy_frac;  // per server type, sup over time of the mean curve
  double sup_fluid_gap = -1.0;        // sup |mean xbar - ode|; -1 when not applicable
};

struct ScalingOutcome {
  std::vector<ScalingRow> rows;
  FluidParams fluid;
};
ScalingOutcome run_scaling(const ExperimentConfig& cfg, const RunContext& ctx);

struct ScenarioOutcome {
  std::vector<InitialState> scenarios;
  // mean busy-fraction curves: [scenario][sample][type]
  std::vector<std::vector<std::vector<double>>> curves;
  std::vector<double> times;
  double max_tail_gap = 0.0;
  bool within_band = true;
};
ScenarioOutcome run_scenarios(const ExperimentConfig& cfg, const RunContext& ctx);

struct CoupleOutcome {
  CouplingResult result;
};
CoupleOutcome run_couple(const ExperimentConfig& cfg, const RunContext& ctx);

}  // namespace hetlb
