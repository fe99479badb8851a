#include "massflow/engine.hpp"

#include <cmath>
#include <limits>

namespace massflow {

namespace {

// Pools two adjacent blocks; positions by the configured rule. The weighted
// average keeps the merged path equal to the average of its members' paths.
inline double merged_position(double xl, double ml, double xr, double mr,
                              MergeRule rule) {
  if (rule == MergeRule::midpoint) return 0.5 * (xl + xr);
  return (ml * xl + mr * xr) / (ml + mr);
}

inline double exact_mass(std::int64_t lo, std::int64_t hi, std::int64_t n) {
  return static_cast<double>(hi - lo + 1) / static_cast<double>(n);
}

}  // namespace

FlowState init_uniform(std::int64_t n) {
  if (n < 1) throw std::invalid_argument("particle count must be >= 1");
  FlowState s;
  s.time = 0.0;
  s.n = n;
  s.pos.resize(n);
  s.mass.resize(n);
  s.hi.resize(static_cast<std::size_t>(n));
  s.birth.assign(static_cast<std::size_t>(n), 0.0);
  for (std::int64_t k = 1; k <= n; ++k) {
    s.pos[k - 1] = static_cast<double>(k) / static_cast<double>(n);
    s.mass[k - 1] = 1.0 / static_cast<double>(n);
    s.hi[static_cast<std::size_t>(k - 1)] = static_cast<std::int32_t>(k);
  }
  return s;
}

ArrayXd diffuse_with(const FlowState& s, double dt, const ArrayXd& z) {
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  if (z.size() != s.size())
    throw std::invalid_argument("one normal variate per cluster required");
  if ((s.mass <= 0.0).any())
    throw InternalCorruption("nonpositive cluster mass");
  return s.pos + (dt / s.mass).sqrt() * z;
}

ArrayXd diffuse(const FlowState& s, double dt, RngStream& rng) {
  ArrayXd z(s.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
  return diffuse_with(s, dt, z);
}

double bridge_merge_prob(double g0, double g1, double rate, double dt) {
  if (!(g0 > 0.0) || !(g1 > 0.0))
    throw std::invalid_argument("bridge_merge_prob requires positive gaps; a crossed pair must merge outright");
  if (!(rate > 0.0) || !(dt > 0.0))
    throw std::invalid_argument("bridge_merge_prob requires positive rate and dt");
  return std::exp(-2.0 * g0 * g1 / (rate * dt));
}

FlowState merge_pass(const FlowState& prev, const ArrayXd& proposed,
                     double t_next, std::vector<CoalescenceEvent>& events,
                     MergeRule rule) {
  const Eigen::Index k = prev.size();
  if (proposed.size() != k)
    throw std::invalid_argument("proposed positions size mismatch");

  FlowState out;
  out.time = t_next;
  out.n = prev.n;
  std::vector<double> pos, mass, birth;
  std::vector<std::int32_t> lo, hi;
  pos.reserve(k);
  mass.reserve(k);
  birth.reserve(k);
  lo.reserve(k);
  hi.reserve(k);

  for (Eigen::Index i = 0; i < k; ++i) {
    pos.push_back(proposed[i]);
    mass.push_back(prev.mass[i]);
    birth.push_back(prev.birth[static_cast<std::size_t>(i)]);
    lo.push_back(prev.lo_of(i));
    hi.push_back(prev.hi[static_cast<std::size_t>(i)]);
    while (pos.size() >= 2 && pos[pos.size() - 2] >= pos.back()) {
      const std::size_t r = pos.size() - 1;
      const std::size_t l = r - 1;
      events.push_back({t_next, lo[l], lo[r], lo[l], hi[r],
                        exact_mass(lo[l], hi[r], prev.n), false});
      pos[l] = merged_position(pos[l], mass[l], pos[r], mass[r], rule);
      mass[l] = exact_mass(lo[l], hi[r], prev.n);
      hi[l] = hi[r];
      birth[l] = t_next;
      pos.pop_back();
      mass.pop_back();
      birth.pop_back();
      lo.pop_back();
      hi.pop_back();
    }
  }

  const Eigen::Index m = static_cast<Eigen::Index>(pos.size());
  out.pos = Eigen::Map<const ArrayXd>(pos.data(), m);
  out.mass = Eigen::Map<const ArrayXd>(mass.data(), m);
  out.hi = std::move(hi);
  out.birth = std::move(birth);
  return out;
}

FlowState step_with(const FlowState& s, double dt, const ArrayXd& z,
                    const std::function<double()>& next_uniform, Scheme scheme,
                    std::vector<CoalescenceEvent>& events,
                    const EngineOptions& opt) {
  return step_at(s, dt, s.time + dt, z, next_uniform, scheme, events, opt);
}

FlowState step_at(const FlowState& s, double dt, double t_next,
                  const ArrayXd& z, const std::function<double()>& next_uniform,
                  Scheme scheme, std::vector<CoalescenceEvent>& events,
                  const EngineOptions& opt) {
  ArrayXd q = diffuse_with(s, dt, z);
  if (opt.drift != 0.0) q += opt.drift * dt;

  FlowState pooled = merge_pass(s, q, t_next, events, opt.merge_rule);
  if (scheme == Scheme::grid_crossing || pooled.size() < 2) return pooled;

  // Bridge pass: an adjacent pair whose endpoints stayed ordered may still
  // have met inside the step. The first-passage probability is defined for a
  // pair with a pre-step gap, a post-step gap and fixed masses, so it applies
  // only to pairs whose clusters came through the merge pass intact; a pair
  // with a freshly pooled side already took part in a within-step collapse,
  // where the pairwise picture (and its singleton-rate exponent) is wrong and
  // would chain-merge whole stretches of the line. Eligible boundaries are
  // tested independently, left to right, and a bridge merge makes the result
  // fresh, so it cannot cascade.
  const Eigen::Index b = pooled.size();
  // map pooled block -> pre-step cluster with the same right edge; intact
  // blocks are those whose interval is unchanged.
  std::vector<Eigen::Index> pre_of(static_cast<std::size_t>(b));
  std::vector<bool> intact(static_cast<std::size_t>(b));
  {
    Eigen::Index j = 0;
    for (Eigen::Index i = 0; i < b; ++i) {
      while (s.hi[static_cast<std::size_t>(j)] !=
             pooled.hi[static_cast<std::size_t>(i)])
        ++j;
      pre_of[static_cast<std::size_t>(i)] = j;
      intact[static_cast<std::size_t>(i)] = pooled.lo_of(i) == s.lo_of(j);
    }
  }

  std::vector<double> pos, mass, birth;
  std::vector<std::int32_t> lo, hi;
  std::vector<bool> fresh;
  pos.reserve(b);
  mass.reserve(b);
  birth.reserve(b);
  lo.reserve(b);
  hi.reserve(b);
  fresh.reserve(b);

  for (Eigen::Index i = 0; i < b; ++i) {
    if (!pos.empty() && !fresh.back() && intact[static_cast<std::size_t>(i)]) {
      const Eigen::Index jl = pre_of[static_cast<std::size_t>(i) - 1];
      const Eigen::Index jr = pre_of[static_cast<std::size_t>(i)];
      const double g0 = s.pos[jr] - s.pos[jl];
      const double g1 = pooled.pos[i] - pos.back();
      const double rate = 1.0 / s.mass[jl] + 1.0 / s.mass[jr];
      if (next_uniform() < bridge_merge_prob(g0, g1, rate, dt)) {
        const std::size_t l = pos.size() - 1;
        events.push_back({t_next, lo[l],
                          static_cast<std::int32_t>(pooled.lo_of(i)), lo[l],
                          pooled.hi[static_cast<std::size_t>(i)],
                          exact_mass(lo[l], pooled.hi[static_cast<std::size_t>(i)], s.n),
                          true});
        pos[l] = merged_position(pos[l], mass[l], pooled.pos[i], pooled.mass[i],
                                 opt.merge_rule);
        mass[l] = exact_mass(lo[l], pooled.hi[static_cast<std::size_t>(i)], s.n);
        hi[l] = pooled.hi[static_cast<std::size_t>(i)];
        birth[l] = t_next;
        fresh[l] = true;
        continue;
      }
    }
    pos.push_back(pooled.pos[i]);
    mass.push_back(pooled.mass[i]);
    birth.push_back(pooled.birth[static_cast<std::size_t>(i)]);
    lo.push_back(pooled.lo_of(i));
    hi.push_back(pooled.hi[static_cast<std::size_t>(i)]);
    fresh.push_back(!intact[static_cast<std::size_t>(i)]);
  }

  FlowState out;
  out.time = t_next;
  out.n = s.n;
  const Eigen::Index m = static_cast<Eigen::Index>(pos.size());
  out.pos = Eigen::Map<const ArrayXd>(pos.data(), m);
  out.mass = Eigen::Map<const ArrayXd>(mass.data(), m);
  out.hi = std::move(hi);
  out.birth = std::move(birth);
  return out;
}

FlowState step(const FlowState& s, double dt, RngStream& rng, Scheme scheme,
               std::vector<CoalescenceEvent>& events, const EngineOptions& opt) {
  ArrayXd z(s.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
  return step_with(s, dt, z, [&rng] { return rng.uniform(); }, scheme, events,
                   opt);
}

TrajectoryRecord run_replica(const SimConfig& cfg, std::int64_t replica_index,
                             const EngineOptions& opt) {
  cfg.validate();
  const double T = cfg.horizon;
  const double dt = cfg.dt;
  std::int64_t num_steps =
      static_cast<std::int64_t>(std::ceil(T / dt - 1e-9));
  if (num_steps < 1) num_steps = 1;

  TrajectoryRecord rec;
  rec.config = cfg;
  rec.replica_index = replica_index;
  rec.events.reserve(static_cast<std::size_t>(cfg.n > 0 ? cfg.n - 1 : 0));

  std::vector<std::int64_t> probe_k;
  probe_k.reserve(cfg.u_probes.size());
  for (double u : cfg.u_probes) probe_k.push_back(probe_index(u, cfg.n));

  const std::int64_t recorded =
      1 + num_steps / cfg.record_stride +
      ((num_steps % cfg.record_stride) != 0 ? 1 : 0);
  rec.times.reserve(static_cast<std::size_t>(recorded));
  rec.snapshots.reserve(static_cast<std::size_t>(recorded));
  rec.probe_y.resize(static_cast<Eigen::Index>(probe_k.size()), recorded);
  rec.probe_mass.resize(static_cast<Eigen::Index>(probe_k.size()), recorded);

  RngStream rng(cfg.master_seed, static_cast<std::uint64_t>(replica_index));
  FlowState state = init_uniform(cfg.n);

  ArrayXd z;
  const auto uni = [&rng] { return rng.uniform(); };

  Eigen::Index col = 0;
  const auto record = [&](const FlowState& st) {
    check_invariants(st);
    rec.times.push_back(st.time);
    rec.snapshots.push_back({st.time, st.pos, st.mass, st.hi});
    Eigen::Index c = 0;
    for (std::size_t p = 0; p < probe_k.size(); ++p) {
      while (st.hi[static_cast<std::size_t>(c)] < probe_k[p]) ++c;
      rec.probe_y(static_cast<Eigen::Index>(p), col) = st.pos[c];
      rec.probe_mass(static_cast<Eigen::Index>(p), col) = st.mass[c];
    }
    ++col;
  };

  record(state);
  double t_prev = 0.0;
  for (std::int64_t k = 1; k <= num_steps; ++k) {
    const double t_k = (k == num_steps) ? T : static_cast<double>(k) * dt;
    const double dt_k = t_k - t_prev;
    z.resize(state.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
    state = step_at(state, dt_k, t_k, z, uni, cfg.scheme, rec.events, opt);
    if (k % cfg.record_stride == 0 || k == num_steps) record(state);
    t_prev = t_k;
  }
  return rec;
}

ArrayXd eta_path(const TrajectoryRecord& rec) {
  ArrayXd eta(static_cast<Eigen::Index>(rec.snapshots.size()));
  for (std::size_t i = 0; i < rec.snapshots.size(); ++i)
    eta[static_cast<Eigen::Index>(i)] =
        (rec.snapshots[i].mass * rec.snapshots[i].pos).sum();
  return eta;
}

std::vector<TrajectoryRecord> run_ensemble(const SimConfig& cfg,
                                           const EngineOptions& opt,
                                           int threads) {
  return ensemble_map(cfg, opt, threads,
                      [](const TrajectoryRecord& r) { return r; });
}

}  // namespace massflow
