#include "massflow/types.hpp"

#include <algorithm>
#include <cmath>

namespace massflow {

std::string to_string(Scheme s) {
  return s == Scheme::grid_crossing ? "grid-crossing" : "bridge-corrected";
}

std::string to_string(MergeRule r) {
  return r == MergeRule::weighted ? "weighted" : "midpoint";
}

Scheme scheme_from_string(const std::string& s) {
  if (s == "grid-crossing") return Scheme::grid_crossing;
  if (s == "bridge-corrected") return Scheme::bridge_corrected;
  throw ConfigError("scheme", "scheme must be \"grid-crossing\" or \"bridge-corrected\", got \"" + s + "\"");
}

MergeRule merge_rule_from_string(const std::string& s) {
  if (s == "weighted") return MergeRule::weighted;
  if (s == "midpoint") return MergeRule::midpoint;
  throw ConfigError("merge-rule", "merge rule must be \"weighted\" or \"midpoint\", got \"" + s + "\"");
}

void SimConfig::validate() const {
  if (n < 1) throw ConfigError("n", "n must be a positive integer");
  if (!(horizon > 0.0) || !std::isfinite(horizon))
    throw ConfigError("horizon", "horizon must be a finite positive time");
  if (!(dt > 0.0) || !std::isfinite(dt))
    throw ConfigError("dt", "dt must be a finite positive time");
  if (!(dt < horizon))
    throw ConfigError("dt", "dt must be smaller than horizon");
  if (replicas < 1) throw ConfigError("replicas", "replicas must be >= 1");
  if (record_stride < 1)
    throw ConfigError("record_stride", "record_stride must be >= 1");
  for (std::size_t i = 0; i < u_probes.size(); ++i) {
    const double u = u_probes[i];
    if (!(u >= 0.0 && u <= 1.0))
      throw ConfigError("u_probes", "u_probes[" + std::to_string(i) + "] outside [0,1]");
    if (i > 0 && u < u_probes[i - 1])
      throw ConfigError("u_probes", "u_probes must be sorted ascending");
  }
}

void check_invariants(const FlowState& s, double mass_tol) {
  const Eigen::Index k = s.size();
  if (k == 0) throw InternalCorruption("empty FlowState");
  if (s.mass.size() != k || static_cast<Eigen::Index>(s.hi.size()) != k ||
      static_cast<Eigen::Index>(s.birth.size()) != k)
    throw InternalCorruption("FlowState arrays have mismatched sizes");
  std::int64_t prev_hi = 0;
  double mass_sum = 0.0;
  for (Eigen::Index i = 0; i < k; ++i) {
    if (i > 0 && !(s.pos[i - 1] < s.pos[i]))
      throw InternalCorruption("cluster positions not strictly increasing");
    const std::int64_t lo = prev_hi + 1;
    const std::int64_t hi = s.hi[static_cast<std::size_t>(i)];
    if (hi < lo) throw InternalCorruption("empty cluster interval");
    const double exact = static_cast<double>(hi - lo + 1) / static_cast<double>(s.n);
    if (s.mass[i] != exact)
      throw InternalCorruption("cluster mass deviates from interval/n");
    mass_sum += s.mass[i];
    prev_hi = hi;
  }
  if (prev_hi != s.n)
    throw InternalCorruption("cluster intervals do not partition {1..n}");
  if (std::abs(mass_sum - 1.0) > mass_tol)
    throw InternalCorruption("cluster masses do not sum to 1");
}

std::int64_t probe_index(double u, std::int64_t n) {
  if (!(u >= 0.0 && u <= 1.0))
    throw std::invalid_argument("probe label u outside [0,1]");
  if (n < 1) throw std::invalid_argument("particle count must be >= 1");
  const std::int64_t k = static_cast<std::int64_t>(std::floor(u * static_cast<double>(n))) + 1;
  return std::clamp<std::int64_t>(k, 1, n);
}

Eigen::Index locate_cluster(const FlowState& s, std::int64_t index) {
  if (index < 1 || index > s.n)
    throw std::invalid_argument("particle index outside [1,n]");
  const auto it = std::lower_bound(s.hi.begin(), s.hi.end(),
                                   static_cast<std::int32_t>(index));
  if (it == s.hi.end())
    throw InternalCorruption("particle index not covered by any interval");
  return static_cast<Eigen::Index>(it - s.hi.begin());
}

}  // namespace massflow
