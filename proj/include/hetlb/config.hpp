#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hetlb/criticality.hpp"
#include "hetlb/model.hpp"
#include "hetlb/policies.hpp"
#include "hetlb/simulator.hpp"

namespace hetlb {

// Raised for malformed or inconsistent configuration, with the offending
// field's path in the message. The CLI maps it to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct MembershipSpec {
  enum class Kind { Equispaced, SeededUniform, Explicit } kind = Kind::Equispaced;
  std::uint64_t seed = 0;
  std::vector<double> values;

  MembershipMap build(std::size_t n) const;
};

struct InstanceConfig {
  std::size_t N = 0;
  std::optional<std::size_t> W;  // defaults to round(xi * N)
  double xi = 1.0;
  RateFunction f;
  ArrivalRate lambda = ArrivalRate::constant(0.0);
  MembershipSpec phi1, phi2;

  std::size_t dispatchers() const;
  SystemInstance build() const;
};

struct PartitionSpec {
  std::vector<double> w_breaks, v_breaks;
  RoutingMatrix p;
};

struct CheckSpec {
  double rho_star = 0.9;
  int n_max = 5;
};

struct ExperimentConfig {
  InstanceConfig instance;
  std::vector<PolicySpec::Kind> policies;
  std::optional<PartitionSpec> partition;
  std::optional<CheckSpec> check;

  double horizon = 100.0;
  double sample_dt = 1.0;
  std::vector<double> sample_times;  // overrides sample_dt when nonempty
  int replications = 1;
  std::uint64_t base_seed = 1;
  double warmup_fraction = 0.5;
  double bad_rate_threshold = 0.5;
  InitialState initial_state = InitialState::Empty;
  int queue_cap = 10;
  double eps_scale = 1.0;  // shrink factor applied to the epsilon allocation
  int workers = 0;         // 0 = hardware concurrency

  std::vector<std::size_t> scaling_N;
  std::vector<InitialState> scenarios;
  double scenario_gap_band = 0.02;  // reported pass band for tail-window gaps

  std::string resolved_json;  // every field made explicit; reports embed this

  std::vector<double> sample_grid() const;
};

ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config_file(const std::string& path);

}  // namespace hetlb
