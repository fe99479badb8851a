#pragma once

#include "massflow/rng.hpp"
#include "massflow/types.hpp"

#include <atomic>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace massflow {

// Optional fault injections used by the verification harness's negative
// controls. Defaults leave the dynamics unmodified.
struct EngineOptions {
  MergeRule merge_rule = MergeRule::weighted;
  double drift = 0.0;  // deterministic drift added per unit time
};

// n singleton clusters, cluster k at k/n with mass 1/n.
FlowState init_uniform(std::int64_t n);

// One proposed position per cluster: pos + sqrt(dt/mass) * z. Ordering is
// not yet enforced.
ArrayXd diffuse_with(const FlowState& s, double dt, const ArrayXd& z);
ArrayXd diffuse(const FlowState& s, double dt, RngStream& rng);

// Probability that the gap process of an adjacent pair, moving from g0 to g1
// across one step at the given variance rate, touched zero in between:
// exp(-2*g0*g1/(rate*dt)).
double bridge_merge_prob(double g0, double g1, double rate, double dt);

// Collapses every crossing (x_left >= x_right) of the proposed positions by
// pooling adjacent clusters at their mass-weighted average, restarting around
// each merge so cascades resolve within the pass. Emits one event per merge.
FlowState merge_pass(const FlowState& prev, const ArrayXd& proposed,
                     double t_next, std::vector<CoalescenceEvent>& events,
                     MergeRule rule = MergeRule::weighted);

// Full step on pre-drawn normals; bridge uniforms are pulled on demand from
// next_uniform. Exposed separately so tests can force the noise.
FlowState step_with(const FlowState& s, double dt, const ArrayXd& z,
                    const std::function<double()>& next_uniform, Scheme scheme,
                    std::vector<CoalescenceEvent>& events,
                    const EngineOptions& opt = {});

// Same, but lands on an explicitly given grid time instead of the
// accumulated s.time + dt (keeps long runs free of rounding drift).
FlowState step_at(const FlowState& s, double dt, double t_next,
                  const ArrayXd& z, const std::function<double()>& next_uniform,
                  Scheme scheme, std::vector<CoalescenceEvent>& events,
                  const EngineOptions& opt = {});

FlowState step(const FlowState& s, double dt, RngStream& rng, Scheme scheme,
               std::vector<CoalescenceEvent>& events,
               const EngineOptions& opt = {});

// Deterministic function of (config, replica_index): loops step over
// ceil(horizon/dt) steps (last one truncated so the final time is exactly
// horizon) and records every record_stride-th step plus the endpoints.
TrajectoryRecord run_replica(const SimConfig& cfg, std::int64_t replica_index,
                             const EngineOptions& opt = {});

// Mass-weighted mean position per recorded time; equals (1/n) sum_k x_k.
ArrayXd eta_path(const TrajectoryRecord& rec);

std::vector<TrajectoryRecord> run_ensemble(const SimConfig& cfg,
                                           const EngineOptions& opt = {},
                                           int threads = 0);

// Runs `per_replica` on every replica's record and returns the results in
// replica order, so aggregation does not depend on scheduling. Worker
// exceptions abort the ensemble and are rethrown with the replica index.
template <class F>
auto ensemble_map(const SimConfig& cfg, const EngineOptions& opt, int threads,
                  F&& per_replica)
    -> std::vector<decltype(per_replica(std::declval<const TrajectoryRecord&>()))> {
  using R = decltype(per_replica(std::declval<const TrajectoryRecord&>()));
  const std::int64_t m = cfg.replicas;
  std::vector<R> out(static_cast<std::size_t>(m));
  if (threads <= 0)
    threads = static_cast<int>(std::thread::hardware_concurrency());
  if (threads < 1) threads = 1;
  threads = static_cast<int>(std::min<std::int64_t>(threads, m));

  std::atomic<std::int64_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::int64_t error_replica = -1;
  std::mutex error_mu;

  auto worker = [&] {
    while (!failed.load(std::memory_order_relaxed)) {
      const std::int64_t i = next.fetch_add(1);
      if (i >= m) return;
      try {
        TrajectoryRecord rec = run_replica(cfg, i, opt);
        out[static_cast<std::size_t>(i)] = per_replica(rec);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!failed.exchange(true)) {
          error = std::current_exception();
          error_replica = i;
        }
        return;
      }
    }
  };

  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failed.load()) {
    try {
      std::rethrow_exception(error);
    } catch (const std::exception& e) {
      throw std::runtime_error("replica " + std::to_string(error_replica) +
                               " failed: " + e.what());
    }
  }
  return out;
}

}  // namespace massflow
