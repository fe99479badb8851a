#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "massflow/config.hpp"
#include "massflow/engine.hpp"
#include "massflow/io.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace massflow;
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("massflow_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

SimConfig tiny_config() {
  SimConfig cfg;
  cfg.n = 24;
  cfg.horizon = 0.05;
  cfg.dt = 1e-3;
  cfg.master_seed = 7;
  cfg.replicas = 6;
  cfg.record_stride = 10;
  cfg.u_probes = {0.25, 0.5, 0.75};
  return cfg;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(MASSFLOW_CLI_PATH) + " " + args + " 2>/dev/null";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("summary CSVs carry the pinned headers and deterministic bytes") {
  const fs::path dir = fresh_dir("csv");
  const SimConfig cfg = tiny_config();
  const EnsembleSummary s1 = summarize_ensemble(cfg, {}, 2);
  write_clusters_csv((dir / "clusters.csv").string(), s1);
  write_probes_csv((dir / "probes.csv").string(), s1);

  const std::string clusters = read_file(dir / "clusters.csv");
  const std::string probes = read_file(dir / "probes.csv");
  CHECK(clusters.rfind("t,N_mean,N_se\n", 0) == 0);
  CHECK(probes.rfind("u,t,y_mean,y_se,y_var,mass_mean\n", 0) == 0);

  const EnsembleSummary s2 = summarize_ensemble(cfg, {}, 1);
  write_clusters_csv((dir / "clusters2.csv").string(), s2);
  write_probes_csv((dir / "probes2.csv").string(), s2);
  CHECK(read_file(dir / "clusters2.csv") == clusters);
  CHECK(read_file(dir / "probes2.csv") == probes);
}

TEST_CASE("trajectory dump round-trips through the binary format") {
  const fs::path dir = fresh_dir("dump");
  SimConfig cfg = tiny_config();
  cfg.replicas = 1;
  const TrajectoryRecord rec = run_replica(cfg, 0);
  const std::string path = (dir / "traj.bin").string();
  write_trajectory_dump(path, rec);

  const std::string raw = read_file(path);
  CHECK(raw.substr(0, 4) == "MFS1");

  const DumpData d = read_trajectory_dump(path);
  CHECK(d.n == static_cast<std::uint64_t>(cfg.n));
  CHECK(d.steps == rec.snapshots.size());
  CHECK(d.stride == static_cast<std::uint64_t>(cfg.record_stride));
  for (std::size_t j = 0; j < rec.snapshots.size(); ++j) {
    const auto& snap = rec.snapshots[j];
    REQUIRE(d.data[j].count == static_cast<std::uint64_t>(snap.pos.size()));
    for (Eigen::Index c = 0; c < snap.pos.size(); ++c) {
      CHECK(d.data[j].pos[static_cast<std::size_t>(c)] == snap.pos[c]);
      CHECK(d.data[j].mass[static_cast<std::size_t>(c)] == snap.mass[c]);
    }
  }

  CHECK_THROWS_AS(read_trajectory_dump((dir / "missing.bin").string()), IoError);
  std::ofstream bad(dir / "bad.bin", std::ios::binary);
  bad << "NOPE";
  bad.close();
  CHECK_THROWS_AS(read_trajectory_dump((dir / "bad.bin").string()), IoError);
}

TEST_CASE("report JSON round-trip preserves every field") {
  const fs::path dir = fresh_dir("report");
  VerificationReport rep;
  rep.add({"alpha/one", 1.25, 0.5, 1.0, "mean-within-3SE", true});
  rep.add({"beta/two", 0.9, 0.01, 0.5, "bound-with-slack+3SE", false});
  const std::string path = (dir / "report.json").string();
  write_report_json(path, rep);
  const VerificationReport back = read_report_json(path);
  REQUIRE(back.entries.size() == 2);
  CHECK(back.entries[0].name == "alpha/one");
  CHECK(back.entries[0].estimate == 1.25);
  CHECK(back.entries[0].se == 0.5);
  CHECK(back.entries[0].target == 1.0);
  CHECK(back.entries[0].rule == "mean-within-3SE");
  CHECK(back.entries[0].pass);
  CHECK_FALSE(back.entries[1].pass);
  CHECK_FALSE(back.all_pass());
}

TEST_CASE("manifest digests match emitted files") {
  const fs::path dir = fresh_dir("manifest");
  const SimConfig cfg = tiny_config();
  const EnsembleSummary s = summarize_ensemble(cfg, {}, 2);
  write_clusters_csv((dir / "clusters.csv").string(), s);
  const OutputFileInfo info = file_info(dir.string(), "clusters.csv");
  CHECK(info.bytes == read_file(dir / "clusters.csv").size());

  char expect[24];
  std::snprintf(expect, sizeof(expect), "%016llx",
                static_cast<unsigned long long>(fnv1a64_file((dir / "clusters.csv").string())));
  CHECK(info.fnv1a64 == expect);

  write_manifest((dir / "manifest.json").string(), cfg, 1.5, {info});
  const std::string manifest = read_file(dir / "manifest.json");
  CHECK(manifest.find("\"diffusion_convention\": \"rate=1/mass\"") != std::string::npos);
  CHECK(manifest.find("\"clusters.csv\"") != std::string::npos);
  CHECK(manifest.find(info.fnv1a64) != std::string::npos);
  CHECK(manifest.find("\"replica_streams\"") != std::string::npos);
}

TEST_CASE("cli: simulate writes outputs and is byte-deterministic") {
  const fs::path dir = fresh_dir("cli_sim");
  const fs::path cfg_path = dir / "config.json";
  {
    std::ofstream out(cfg_path);
    out << R"({"n":4,"horizon":0.1,"dt":0.01,"replicas":1,"master_seed":1})";
  }
  const fs::path out1 = dir / "run1";
  const fs::path out2 = dir / "run2";
  CHECK(run_cli("simulate --config " + cfg_path.string() + " --out " + out1.string() +
                " --dump-trajectories") == 0);
  CHECK(run_cli("simulate --config " + cfg_path.string() + " --out " + out2.string() +
                " --dump-trajectories") == 0);
  CHECK(fs::exists(out1 / "manifest.json"));
  CHECK(fs::exists(out1 / "clusters.csv"));
  CHECK(fs::exists(out1 / "probes.csv"));
  CHECK(read_file(out1 / "clusters.csv") == read_file(out2 / "clusters.csv"));
  CHECK(read_file(out1 / "probes.csv") == read_file(out2 / "probes.csv"));
  CHECK(read_file(out1 / "traj_00000.bin") == read_file(out2 / "traj_00000.bin"));
}

TEST_CASE("cli: validation failures exit 2 and name the field") {
  const fs::path dir = fresh_dir("cli_bad");
  const fs::path cfg_path = dir / "config.json";
  {
    std::ofstream out(cfg_path);
    out << R"({"n":4,"horizon":0.1,"dt":0.5,"replicas":1})";  // dt >= horizon
  }
  const std::string cmd = std::string(MASSFLOW_CLI_PATH) + " simulate --config " +
                          cfg_path.string() + " --out " + (dir / "o").string() +
                          " 2> " + (dir / "err.txt").string();
  const int status = std::system(cmd.c_str());
  CHECK(WEXITSTATUS(status) == 2);
  const std::string err = read_file(dir / "err.txt");
  CHECK(err.find("dt") != std::string::npos);

  CHECK(run_cli("simulate --config " + (dir / "nope.json").string() + " --out " +
                (dir / "o").string()) == 2);
}

TEST_CASE("cli: unknown check name exits 2; tiny verify run exits 0") {
  const fs::path dir = fresh_dir("cli_verify");
  const fs::path cfg_path = dir / "config.json";
  {
    std::ofstream out(cfg_path);
    out << R"({"n":50,"horizon":0.1,"dt":0.002,"replicas":60,"master_seed":3,)"
        << R"("u_probes":[0.25,0.5,0.75]})";
  }
  CHECK(run_cli("verify --config " + cfg_path.string() + " --out " +
                (dir / "v1").string() + " --checks nonexistent") == 2);
  CHECK(run_cli("verify --config " + cfg_path.string() + " --out " +
                (dir / "v2").string() + " --checks martingale_mean") == 0);
  CHECK(fs::exists(dir / "v2" / "report.json"));
  CHECK(fs::exists(dir / "v2" / "report.txt"));

  // negative control: injected drift must fail the martingale check
  CHECK(run_cli("verify --config " + cfg_path.string() + " --out " +
                (dir / "v3").string() + " --checks martingale_mean --inject-drift 5") == 4);
}

TEST_CASE("cli: MASSFLOW_SEED overrides the config seed") {
  const fs::path dir = fresh_dir("cli_seed");
  const fs::path cfg_path = dir / "config.json";
  {
    std::ofstream out(cfg_path);
    out << R"({"n":8,"horizon":0.05,"dt":0.005,"replicas":2,"master_seed":1,)"
        << R"("u_probes":[0.5]})";
  }
  CHECK(run_cli("simulate --config " + cfg_path.string() + " --out " +
                (dir / "a").string()) == 0);
  {
    const std::string cmd = "MASSFLOW_SEED=42 " + std::string(MASSFLOW_CLI_PATH) +
                            " simulate --config " + cfg_path.string() + " --out " +
                            (dir / "b").string() + " 2>/dev/null";
    CHECK(WEXITSTATUS(std::system(cmd.c_str())) == 0);
  }
  CHECK(read_file(dir / "a" / "probes.csv") != read_file(dir / "b" / "probes.csv"));

  const std::string bad = "MASSFLOW_SEED=junk " + std::string(MASSFLOW_CLI_PATH) +
                          " simulate --config " + cfg_path.string() + " --out " +
                          (dir / "c").string() + " 2>/dev/null";
  CHECK(WEXITSTATUS(std::system(bad.c_str())) == 2);
}

TEST_CASE("cli: localtime writes the pinned CSV header and duality entries") {
  const fs::path dir = fresh_dir("cli_lt");
  const fs::path cfg_path = dir / "config.json";
  {
    std::ofstream out(cfg_path);
    out << R"({"n":128,"horizon":0.1,"dt":0.0005,"replicas":4,"master_seed":11})";
  }
  CHECK(run_cli("localtime --config " + cfg_path.string() + " --out " +
                (dir / "lt").string() + " --a-min -0.25 --a-max 1.25 --a-step 0.002 "
                "--times 0.05 0.1") == 0);
  const std::string csv = read_file(dir / "lt" / "localtime.csv");
  CHECK(csv.rfind("a,t,L_mean,L_se\n", 0) == 0);
  const VerificationReport rep = read_report_json((dir / "lt" / "report.json").string());
  bool saw_duality = false;
  for (const auto& e : rep.entries)
    if (e.name.rfind("localtime/duality", 0) == 0) saw_duality = true;
  CHECK(saw_duality);
}

TEST_CASE("cli: a-range entirely above the support yields an all-zero profile") {
  const fs::path dir = fresh_dir("cli_lt0");
  const fs::path cfg_path = dir / "config.json";
  {
    std::ofstream out(cfg_path);
    out << R"({"n":16,"horizon":0.02,"dt":0.001,"replicas":2,"master_seed":2})";
  }
  CHECK(run_cli("localtime --config " + cfg_path.string() + " --out " +
                (dir / "lt").string() + " --a-min 50 --a-max 51 --a-step 0.1 "
                "--times 0.02") == 0);
  std::ifstream in(dir / "lt" / "localtime.csv");
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    const auto c3 = line.find(',', c2 + 1);
    CHECK(std::stod(line.substr(c2 + 1, c3 - c2 - 1)) == 0.0);
  }
}
