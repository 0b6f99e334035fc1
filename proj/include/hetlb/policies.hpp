#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hetlb/criticality.hpp"
#include "hetlb/model.hpp"
#include "hetlb/util.hpp"

namespace hetlb {

// Capacity reservation: each server type V_m is split, in ascending index
// order, into blocks Vtilde_{h,m} (one per task class) plus an unreserved
// remainder that is never routed to. Class-h tasks may only use the union of
// blocks Vtilde_{h,.}, at the original service rates.
struct ReservationPlan {
  std::vector<double> w_breaks;
  std::vector<double> v_breaks;
  std::vector<int> dispatcher_class;  // W entries, class h of each dispatcher
  std::vector<int> server_type;       // N entries, type m of each server
  std::vector<int> block_h;           // N entries, -1 when unreserved
  std::vector<int> block_m;           // N entries, -1 when unreserved
  std::vector<std::vector<int>> block_sizes;               // H x M
  std::vector<std::vector<std::vector<int>>> block_servers;  // [h][m] -> server ids
  std::vector<std::vector<int>> class_domain;              // [h] -> union over m
  std::vector<int> unreserved_per_type;                    // M entries
  Matrix block_rate;  // H x M cell rates the sizes were computed from
  Matrix eps;         // the epsilon allocation used

  std::size_t task_classes() const { return block_sizes.size(); }
  std::size_t server_types() const { return unreserved_per_type.size(); }

  // Rate after pruning: the instance's own rate on reserved (class, block)
  // edges, zero everywhere else.
  double pruned_rate(const SystemInstance& g, std::size_t i, std::size_t j) const {
    return block_h[j] >= 0 && block_h[j] == dispatcher_class[i] ? g.rate(i, j) : 0.0;
  }
};

// Builds the reservation from a subcritical plan and a Poly(p) point. Fails
// with a shortfall diagnostic when floor-rounded block sizes do not fit in
// some server group; shrinking eps and retrying is the caller's move.
ReservationPlan icrd_reserve(const SystemInstance& g, const PartitionPlan& plan,
                             const EpsilonAllocation& eps);

// Read view of the simulation state that routing decisions may consult.
class SimStateView {
 public:
  virtual ~SimStateView() = default;
  virtual int queue_len(int server) const = 0;
  virtual double weighted_queue(int server) const = 0;
  // Idle servers of server type m (grouping fixed at simulation start).
  virtual const IndexedSet& idle_in_type(int m) const = 0;
  // Idle servers in class h's reserved domain (reservation runs only).
  virtual const IndexedSet& idle_in_class_domain(int h) const = 0;
};

struct PolicySpec {
  enum class Kind { RandomOpenLoop, Jiq, Jfiq, Jfsq, MinDrift, PBasedJiq, IcrdJiq };
  Kind kind = Kind::Jiq;
  std::optional<RoutingMatrix> p;  // RandomOpenLoop / PBasedJiq
  std::vector<double> w_breaks;    // grouping for p-carrying policies
  std::vector<double> v_breaks;

  static const char* kind_name(Kind k);
};

class Policy {
 public:
  virtual ~Policy() = default;
  virtual std::string name() const = 0;
  virtual int route(const SimStateView& state, int dispatcher, Rng& rng) const = 0;
  virtual const ReservationPlan* reservation() const { return nullptr; }
  // Server-type grouping this policy routes over, when it has one.
  virtual const std::vector<double>* type_breaks() const { return nullptr; }
  virtual double effective_rate(std::size_t i, std::size_t j) const;

 protected:
  explicit Policy(const SystemInstance& g) : instance_(&g) {}
  const SystemInstance& instance() const { return *instance_; }

 private:
  const SystemInstance* instance_;
};

// reservation is required for IcrdJiq and ignored otherwise.
std::unique_ptr<Policy> make_policy(const PolicySpec& spec, const SystemInstance& g,
                                    const ReservationPlan* reservation = nullptr);

}  // namespace hetlb
