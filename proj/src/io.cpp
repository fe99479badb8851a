#include "massflow/io.hpp"

#include "massflow/config.hpp"
#include "massflow/engine.hpp"
#include "massflow/rng.hpp"

#include <json.hpp>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <stdexcept>

namespace massflow {

namespace {

using nlohmann::json;

constexpr char kArtifactVersion[] = "1.0.0";
constexpr char kDiffusionConvention[] = "rate=1/mass";

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::ofstream open_out(const std::string& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode);
  if (!out) throw IoError("cannot open output file: " + path);
  return out;
}

void write_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t read_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw IoError("truncated trajectory dump");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

namespace {

std::string dump_name(std::int64_t replica) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "traj_%05lld.bin", static_cast<long long>(replica));
  return buf;
}

}  // namespace

EnsembleSummary summarize_ensemble(const SimConfig& cfg, const EngineOptions& opt,
                                   int threads, const std::string& dump_dir) {
  struct Feature {
    std::vector<double> times;
    std::vector<double> n_at;
    std::vector<double> y;  // probe-major
    std::vector<double> m;
  };
  const auto features = ensemble_map(cfg, opt, threads, [&](const TrajectoryRecord& rec) {
    Feature f;
    if (!dump_dir.empty())
      write_trajectory_dump(dump_dir + "/" + dump_name(rec.replica_index), rec);
    f.times = rec.times;
    f.n_at.reserve(rec.snapshots.size());
    for (const auto& s : rec.snapshots)
      f.n_at.push_back(static_cast<double>(s.pos.size()));
    for (Eigen::Index p = 0; p < rec.probe_y.rows(); ++p)
      for (Eigen::Index j = 0; j < rec.probe_y.cols(); ++j) {
        f.y.push_back(rec.probe_y(p, j));
        f.m.push_back(rec.probe_mass(p, j));
      }
    return f;
  });

  EnsembleSummary s;
  s.times = features.front().times;
  s.u_probes = cfg.u_probes;
  const std::size_t nt = s.times.size();
  const std::size_t np = s.u_probes.size();
  s.n_acc.resize(nt);
  s.y_acc.assign(np, std::vector<Accumulator>(nt));
  s.mass_acc.assign(np, std::vector<Accumulator>(nt));
  for (const auto& f : features) {
    for (std::size_t j = 0; j < nt; ++j) s.n_acc[j].add(f.n_at[j]);
    for (std::size_t p = 0; p < np; ++p)
      for (std::size_t j = 0; j < nt; ++j) {
        s.y_acc[p][j].add(f.y[p * nt + j]);
        s.mass_acc[p][j].add(f.m[p * nt + j]);
      }
  }
  return s;
}

void write_clusters_csv(const std::string& path, const EnsembleSummary& s) {
  auto out = open_out(path);
  out << "t,N_mean,N_se\n";
  for (std::size_t j = 0; j < s.times.size(); ++j)
    out << fmt17(s.times[j]) << ',' << fmt17(s.n_acc[j].mean()) << ','
        << fmt17(s.n_acc[j].se()) << '\n';
}

void write_probes_csv(const std::string& path, const EnsembleSummary& s) {
  auto out = open_out(path);
  out << "u,t,y_mean,y_se,y_var,mass_mean\n";
  for (std::size_t p = 0; p < s.u_probes.size(); ++p)
    for (std::size_t j = 0; j < s.times.size(); ++j)
      out << fmt17(s.u_probes[p]) << ',' << fmt17(s.times[j]) << ','
          << fmt17(s.y_acc[p][j].mean()) << ',' << fmt17(s.y_acc[p][j].se()) << ','
          << fmt17(s.y_acc[p][j].variance()) << ','
          << fmt17(s.mass_acc[p][j].mean()) << '\n';
}

void write_report_json(const std::string& path, const VerificationReport& rep) {
  json arr = json::array();
  for (const auto& e : rep.entries) {
    arr.push_back({{"name", e.name},
                   {"estimate", e.estimate},
                   {"se", e.se},
                   {"target", e.target},
                   {"rule", e.rule},
                   {"pass", e.pass}});
  }
  auto out = open_out(path);
  out << arr.dump(2) << '\n';
}

VerificationReport read_report_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open report: " + path);
  json arr = json::parse(in);
  VerificationReport rep;
  for (const auto& e : arr) {
    CheckResult r;
    r.name = e.at("name").get<std::string>();
    r.estimate = e.at("estimate").get<double>();
    r.se = e.at("se").get<double>();
    r.target = e.at("target").get<double>();
    r.rule = e.at("rule").get<std::string>();
    r.pass = e.at("pass").get<bool>();
    rep.entries.push_back(std::move(r));
  }
  return rep;
}

void print_report_table(std::ostream& os, const VerificationReport& rep) {
  std::size_t w = 12;
  for (const auto& e : rep.entries) w = std::max(w, e.name.size());
  os << std::left << std::setw(static_cast<int>(w) + 2) << "check"
     << std::setw(14) << "estimate" << std::setw(14) << "se" << std::setw(14)
     << "target" << std::setw(38) << "rule" << "result\n";
  for (const auto& e : rep.entries) {
    char est[32], se[32], tgt[32];
    std::snprintf(est, sizeof(est), "%.6g", e.estimate);
    std::snprintf(se, sizeof(se), "%.3g", e.se);
    std::snprintf(tgt, sizeof(tgt), "%.6g", e.target);
    os << std::left << std::setw(static_cast<int>(w) + 2) << e.name
       << std::setw(14) << est << std::setw(14) << se << std::setw(14) << tgt
       << std::setw(38) << e.rule << (e.pass ? "PASS" : "FAIL") << '\n';
  }
}

void write_trajectory_dump(const std::string& path, const TrajectoryRecord& rec) {
  auto out = open_out(path, std::ios::binary);
  out.write("MFS1", 4);
  write_u64(out, static_cast<std::uint64_t>(rec.config.n));
  write_u64(out, static_cast<std::uint64_t>(rec.snapshots.size()));
  write_u64(out, static_cast<std::uint64_t>(rec.config.record_stride));
  for (const auto& s : rec.snapshots) {
    write_u64(out, static_cast<std::uint64_t>(s.pos.size()));
    out.write(reinterpret_cast<const char*>(s.pos.data()),
              static_cast<std::streamsize>(sizeof(double)) * s.pos.size());
    out.write(reinterpret_cast<const char*>(s.mass.data()),
              static_cast<std::streamsize>(sizeof(double)) * s.mass.size());
  }
  if (!out) throw IoError("failed writing trajectory dump: " + path);
}

DumpData read_trajectory_dump(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open trajectory dump: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "MFS1", 4) != 0)
    throw IoError("bad magic in trajectory dump: " + path);
  DumpData d;
  d.n = read_u64(in);
  d.steps = read_u64(in);
  d.stride = read_u64(in);
  d.data.resize(d.steps);
  for (auto& st : d.data) {
    st.count = read_u64(in);
    st.pos.resize(st.count);
    st.mass.resize(st.count);
    in.read(reinterpret_cast<char*>(st.pos.data()),
            static_cast<std::streamsize>(sizeof(double) * st.count));
    in.read(reinterpret_cast<char*>(st.mass.data()),
            static_cast<std::streamsize>(sizeof(double) * st.count));
    if (!in) throw IoError("truncated trajectory dump: " + path);
  }
  return d;
}

std::uint64_t fnv1a64_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file for digest: " + path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    const std::streamsize got = in.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

OutputFileInfo file_info(const std::string& dir, const std::string& name) {
  const std::string path = dir + "/" + name;
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("missing output file: " + path);
  OutputFileInfo info;
  info.file = name;
  info.bytes = static_cast<std::uint64_t>(in.tellg());
  char hex[24];
  std::snprintf(hex, sizeof(hex), "%016llx",
                static_cast<unsigned long long>(fnv1a64_file(path)));
  info.fnv1a64 = hex;
  return info;
}

void write_manifest(const std::string& path, const SimConfig& cfg,
                    double wall_clock_seconds,
                    const std::vector<OutputFileInfo>& outputs) {
  json j;
  j["artifact_version"] = kArtifactVersion;
  j["diffusion_convention"] = kDiffusionConvention;
  j["config"] = json::parse(serialize_config(cfg));
  j["wall_clock_seconds"] = wall_clock_seconds;
  json streams = json::array();
  for (std::int64_t r = 0; r < cfg.replicas; ++r)
    streams.push_back(RngStream(cfg.master_seed, static_cast<std::uint64_t>(r)).stream_id());
  j["replica_streams"] = streams;
  json outs = json::array();
  for (const auto& o : outputs)
    outs.push_back({{"file", o.file}, {"bytes", o.bytes}, {"fnv1a64", o.fnv1a64}});
  j["outputs"] = outs;
  auto out = open_out(path);
  out << j.dump(2) << '\n';
}

}  // namespace massflow
