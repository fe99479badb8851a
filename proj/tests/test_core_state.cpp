#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "massflow/config.hpp"
#include "massflow/engine.hpp"
#include "massflow/rng.hpp"
#include "massflow/types.hpp"

#include <algorithm>

using namespace massflow;

TEST_CASE("probe_index follows the right-continuous cell convention") {
  CHECK(probe_index(0.5, 4) == 3);   // 0.5 in [2/4, 3/4)
  CHECK(probe_index(1.0, 4) == 4);   // u=1 maps to the last particle
  CHECK(probe_index(0.0, 7) == 1);   // left endpoint convention
  CHECK(probe_index(0.2499999, 4) == 1);
  CHECK(probe_index(0.25, 4) == 2);
  CHECK(probe_index(1.0, 1) == 1);
  CHECK_THROWS_AS(probe_index(-0.1, 4), std::invalid_argument);
  CHECK_THROWS_AS(probe_index(1.1, 4), std::invalid_argument);
}

TEST_CASE("locate_cluster resolves interval containment") {
  FlowState s = init_uniform(5);
  CHECK(locate_cluster(s, 3) == 2);
  CHECK(s.cluster(locate_cluster(s, 3)).position == doctest::Approx(3.0 / 5.0));

  // state with intervals [1,2], [3,5]
  FlowState t;
  t.n = 5;
  t.time = 0.1;
  t.pos.resize(2);
  t.pos << 0.3, 0.7;
  t.mass.resize(2);
  t.mass << 2.0 / 5.0, 3.0 / 5.0;
  t.hi = {2, 5};
  t.birth = {0.1, 0.1};
  check_invariants(t);
  CHECK(locate_cluster(t, 4) == 1);
  CHECK(locate_cluster(t, 2) == 0);
  CHECK_THROWS_AS(locate_cluster(t, 6), std::invalid_argument);
  CHECK_THROWS_AS(locate_cluster(t, 0), std::invalid_argument);

  // after full coalescence any index maps to the survivor
  FlowState full;
  full.n = 5;
  full.pos.resize(1);
  full.pos << 0.42;
  full.mass.resize(1);
  full.mass << 1.0;
  full.hi = {5};
  full.birth = {0.2};
  check_invariants(full);
  for (int k = 1; k <= 5; ++k) CHECK(locate_cluster(full, k) == 0);
}

TEST_CASE("invariant checker flags corruption") {
  FlowState s = init_uniform(4);
  CHECK_NOTHROW(check_invariants(s));

  FlowState bad = s;
  bad.pos[2] = bad.pos[1];  // not strictly increasing
  CHECK_THROWS_AS(check_invariants(bad), InternalCorruption);

  bad = s;
  bad.mass[0] = 0.3;  // mass not interval/n
  CHECK_THROWS_AS(check_invariants(bad), InternalCorruption);

  bad = s;
  bad.hi[3] = 5;  // does not partition {1..n}
  CHECK_THROWS_AS(check_invariants(bad), InternalCorruption);
}

TEST_CASE("config validation names the offending field") {
  SimConfig cfg;
  cfg.n = 4;
  cfg.horizon = 0.1;
  cfg.dt = 0.01;
  CHECK_NOTHROW(cfg.validate());

  cfg.dt = 0.1;  // dt must be < horizon
  try {
    cfg.validate();
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.field == "dt");
  }

  cfg.dt = 0.01;
  cfg.u_probes = {0.5, 0.2};
  try {
    cfg.validate();
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.field == "u_probes");
  }
}

TEST_CASE("config JSON round-trip is identity and unknown keys are rejected") {
  const std::string text = R"({
    "n": 16, "horizon": 0.5, "dt": 0.005, "scheme": "grid-crossing",
    "master_seed": 99, "replicas": 3, "record_stride": 2,
    "u_probes": [0.1, 0.5, 0.9]
  })";
  const SimConfig a = parse_config(text);
  const SimConfig b = parse_config(serialize_config(a));
  CHECK(a.n == b.n);
  CHECK(a.horizon == b.horizon);
  CHECK(a.dt == b.dt);
  CHECK(a.scheme == b.scheme);
  CHECK(a.master_seed == b.master_seed);
  CHECK(a.replicas == b.replicas);
  CHECK(a.record_stride == b.record_stride);
  CHECK(a.u_probes == b.u_probes);
  CHECK(serialize_config(a) == serialize_config(b));

  CHECK_THROWS_AS(parse_config(R"({"n":4,"horizon":1,"dt":0.1,"tpyo":1})"), ConfigError);
  CHECK_THROWS_AS(parse_config("not json"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"n":4,"horizon":1})"), ConfigError);
}

TEST_CASE("property: random valid partitions satisfy locate/probe consistency") {
  RngStream rng(7, 0);
  for (int trial = 0; trial < 50; ++trial) {
    const std::int64_t n = 1 + static_cast<std::int64_t>(rng.uniform() * 40);
    // random ordered partition of {1..n}
    std::vector<std::int32_t> hi;
    std::int32_t at = 0;
    while (at < n) {
      at = std::min<std::int32_t>(
          static_cast<std::int32_t>(n),
          at + 1 + static_cast<std::int32_t>(rng.uniform() * 5));
      hi.push_back(at);
    }
    FlowState s;
    s.n = n;
    const auto k = static_cast<Eigen::Index>(hi.size());
    s.pos.resize(k);
    s.mass.resize(k);
    s.hi = hi;
    s.birth.assign(hi.size(), 0.0);
    double x = 0.0;
    std::int32_t lo = 1;
    for (Eigen::Index i = 0; i < k; ++i) {
      x += rng.uniform();
      s.pos[i] = x;
      s.mass[i] = static_cast<double>(hi[static_cast<std::size_t>(i)] - lo + 1) /
                  static_cast<double>(n);
      lo = hi[static_cast<std::size_t>(i)] + 1;
    }
    check_invariants(s, 1e-9);
    for (std::int64_t idx = 1; idx <= n; ++idx) {
      const Eigen::Index c = locate_cluster(s, idx);
      CHECK(s.lo_of(c) <= idx);
      CHECK(idx <= s.hi[static_cast<std::size_t>(c)]);
    }
    for (double u : {0.0, 0.123, 0.5, 0.977, 1.0}) {
      const std::int64_t idx = probe_index(u, n);
      CHECK(idx >= 1);
      CHECK(idx <= n);
    }
  }
}
