#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace massflow {

using Eigen::ArrayXd;
using Eigen::ArrayXXd;

// Coalescence detection scheme. grid_crossing merges only pairs whose
// end-of-step positions have crossed; bridge_corrected additionally merges
// still-separated pairs with the Brownian-bridge first-passage probability.
enum class Scheme { grid_crossing, bridge_corrected };

// Placement rule for a merged cluster. weighted is the model rule
// (mass-weighted average); midpoint ignores mass and exists only as a
// negative-control fault injection for the verification harness.
enum class MergeRule { weighted, midpoint };

std::string to_string(Scheme s);
std::string to_string(MergeRule r);
Scheme scheme_from_string(const std::string& s);
MergeRule merge_rule_from_string(const std::string& s);

// Thrown when user-provided configuration is invalid. `field` names the
// offending entry.
struct ConfigError : std::runtime_error {
  std::string field;
  ConfigError(std::string field_, const std::string& what_)
      : std::runtime_error(what_), field(std::move(field_)) {}
};

// Thrown when an internal state invariant is violated (simulator bug, not
// user error).
struct InternalCorruption : std::logic_error {
  using std::logic_error::logic_error;
};

struct SimConfig {
  std::int64_t n = 0;              // initial particle count
  double horizon = 0.0;            // T
  double dt = 0.0;                 // time step
  Scheme scheme = Scheme::bridge_corrected;
  std::uint64_t master_seed = 0;
  std::int64_t replicas = 1;       // M
  std::int64_t record_stride = 1;  // record every k-th step
  std::vector<double> u_probes;    // sorted labels in [0,1]

  // Throws ConfigError naming the first violated field.
  void validate() const;
};

// One coalesced group: position on the line, carried mass, and the
// contiguous block [lo,hi] (1-based) of initial particles absorbed into it.
struct ClusterState {
  double position = 0.0;
  double mass = 0.0;
  std::int32_t lo = 0;
  std::int32_t hi = 0;
  double birth_time = 0.0;  // time of the last merge forming this cluster
};

// Full ordered configuration at one time instant, stored column-wise.
// Invariants: pos strictly increasing; the [lo,hi] intervals (implied by
// `hi` and the left neighbour) partition {1,..,n} in order; masses are
// exactly (hi-lo+1)/n and sum to 1.
struct FlowState {
  double time = 0.0;
  std::int64_t n = 0;
  ArrayXd pos;
  ArrayXd mass;
  std::vector<std::int32_t> hi;
  std::vector<double> birth;

  Eigen::Index size() const { return pos.size(); }
  std::int32_t lo_of(Eigen::Index i) const {
    return i == 0 ? 1 : hi[static_cast<std::size_t>(i) - 1] + 1;
  }
  ClusterState cluster(Eigen::Index i) const {
    return {pos[i], mass[i], lo_of(i), hi[static_cast<std::size_t>(i)],
            birth[static_cast<std::size_t>(i)]};
  }
};

// Throws InternalCorruption if any FlowState invariant fails.
void check_invariants(const FlowState& s, double mass_tol = 1e-12);

// Label-to-particle map: the unique k with (k-1)/n <= u < k/n, with u=1
// mapped to n. Rejects u outside [0,1].
std::int64_t probe_index(double u, std::int64_t n);

// Index of the cluster whose interval contains the 1-based particle index.
Eigen::Index locate_cluster(const FlowState& s, std::int64_t index);

struct CoalescenceEvent {
  double time = 0.0;           // grid time of detection (end of step)
  std::int32_t left_id = 0;    // lo index of the left parent
  std::int32_t right_id = 0;   // lo index of the right parent
  std::int32_t lo = 0;         // merged interval
  std::int32_t hi = 0;
  double merged_mass = 0.0;
  bool via_bridge = false;
};

struct Snapshot {
  double time = 0.0;
  ArrayXd pos;
  ArrayXd mass;
  std::vector<std::int32_t> hi;
};

// Time-gridded history of one replica: snapshots at recorded times, all
// coalescence events, and per-probe position/mass paths.
struct TrajectoryRecord {
  SimConfig config;
  std::int64_t replica_index = 0;
  std::vector<double> times;
  std::vector<Snapshot> snapshots;
  std::vector<CoalescenceEvent> events;
  ArrayXXd probe_y;     // (probes x times)
  ArrayXXd probe_mass;  // (probes x times)
};

}  // namespace massflow
