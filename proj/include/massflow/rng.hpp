#pragma once

#include <cstdint>

namespace massflow {

// Reproducible per-replica random stream. The state is derived from
// (master_seed, replica_index) through splitmix64, so distinct replicas get
// decorrelated streams and the same pair always reproduces the same variates,
// independent of how replicas are scheduled across threads.
//
// Generator: xoshiro256++ for the uniform bits, Box-Muller for normals.
class RngStream {
 public:
  RngStream(std::uint64_t master_seed, std::uint64_t replica_index);

  // Uniform on (0,1]; never returns 0, so log(u) is always finite.
  double uniform();

  // Standard normal variate. Generated in pairs; the spare is cached.
  double normal();

  std::uint64_t next_bits();

  std::uint64_t stream_id() const { return stream_id_; }

 private:
  std::uint64_t s_[4];
  std::uint64_t stream_id_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace massflow
