#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hetlb/criticality.hpp"
#include "hetlb/model.hpp"
#include "hetlb/policies.hpp"

namespace hetlb {

struct CouplingOptions {
  double horizon = 0.0;
  std::uint64_t seed = 0;
  // Mutation switch for the power test: when true, the slower system's
  // departures are no longer thinned, which should break dominance.
  bool disable_thinning = false;
  std::size_t max_violations_logged = 100;
};

struct CouplingViolation {
  double time = 0.0;
  int class_h = -1, type_m = -1;
  std::string detail;
};

struct CouplingResult {
  bool dominance_held = true;
  std::int64_t events = 0;
  std::int64_t violation_count = 0;
  std::vector<CouplingViolation> violations;  // first few, see options
};

// Runs the fast system G and its stepwise minorant G' under one coupled
// probability space: shared arrival epochs, case-split JIQ routing, and
// departure thinning at probability mu'/mu <= 1. Both systems run ICRD JIQ
// under the same reservation. Dominance: within every block, the sorted
// queue-length vector of G stays componentwise below that of G'.
CouplingResult coupled_dominance_run(const SystemInstance& g, const SystemInstance& g_prime,
                                     const PartitionPlan& plan, const EpsilonAllocation& eps,
                                     const CouplingOptions& opts);

}  // namespace hetlb
