#pragma once

#include "massflow/checks.hpp"
#include "massflow/stats.hpp"
#include "massflow/types.hpp"

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace massflow {

// Filesystem-level failure (missing/unwritable/corrupt files).
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Streamed ensemble reduction backing the summary CSVs: per recorded time the
// cluster-count moments, per (probe, time) the position and mass moments.
struct EnsembleSummary {
  std::vector<double> times;
  std::vector<double> u_probes;
  std::vector<Accumulator> n_acc;                  // [time]
  std::vector<std::vector<Accumulator>> y_acc;     // [probe][time]
  std::vector<std::vector<Accumulator>> mass_acc;  // [probe][time]
};

// When dump_dir is non-empty, each replica's trajectory is also written to
// dump_dir/traj_NNNNN.bin while it is in memory.
EnsembleSummary summarize_ensemble(const SimConfig& cfg, const EngineOptions& opt,
                                   int threads, const std::string& dump_dir = {});

// clusters.csv: "t,N_mean,N_se"
void write_clusters_csv(const std::string& path, const EnsembleSummary& s);
// probes.csv: "u,t,y_mean,y_se,y_var,mass_mean"
void write_probes_csv(const std::string& path, const EnsembleSummary& s);

// report JSON: array of {name, estimate, se, target, rule, pass}
void write_report_json(const std::string& path, const VerificationReport& rep);
VerificationReport read_report_json(const std::string& path);
void print_report_table(std::ostream& os, const VerificationReport& rep);

// Binary trajectory dump, little-endian: magic "MFS1"; header n, recorded
// step count, stride (u64 each); per recorded step: cluster count (u64),
// positions (f64[count]), masses (f64[count]).
void write_trajectory_dump(const std::string& path, const TrajectoryRecord& rec);

struct DumpStep {
  std::uint64_t count = 0;
  std::vector<double> pos;
  std::vector<double> mass;
};
struct DumpData {
  std::uint64_t n = 0;
  std::uint64_t steps = 0;
  std::uint64_t stride = 0;
  std::vector<DumpStep> data;
};
DumpData read_trajectory_dump(const std::string& path);

std::uint64_t fnv1a64_file(const std::string& path);

struct OutputFileInfo {
  std::string file;
  std::uint64_t bytes = 0;
  std::string fnv1a64;  // hex
};

// Run manifest: config echo, artifact version, adopted diffusion-rate
// convention, wall clock, per-replica stream ids, output inventory with
// content digests.
void write_manifest(const std::string& path, const SimConfig& cfg,
                    double wall_clock_seconds,
                    const std::vector<OutputFileInfo>& outputs);

OutputFileInfo file_info(const std::string& dir, const std::string& name);

}  // namespace massflow
