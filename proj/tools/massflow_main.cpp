#include "massflow/calculus.hpp"
#include "massflow/checks.hpp"
#include "massflow/config.hpp"
#include "massflow/engine.hpp"
#include "massflow/io.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

using namespace massflow;

struct CommonArgs {
  std::string config_path;
  std::string out_dir = ".";
  int threads = 0;
  double inject_drift = 0.0;
  std::string merge_rule = "weighted";
  bool dump_trajectories = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "config JSON path")->required();
  cmd->add_option("--out", args.out_dir, "output directory");
  cmd->add_option("--threads", args.threads,
                  "worker thread hint; outputs do not depend on it");
  cmd->add_option("--inject-drift", args.inject_drift,
                  "add a deterministic drift per unit time (negative-control fixture)");
  cmd->add_option("--merge-rule", args.merge_rule,
                  "weighted (model) or midpoint (negative-control fixture)");
}

SimConfig load_with_overrides(const CommonArgs& args) {
  SimConfig cfg = load_config(args.config_path);
  if (const char* env = std::getenv("MASSFLOW_SEED")) {
    try {
      std::size_t used = 0;
      const std::string s(env);
      const auto seed = std::stoull(s, &used);
      if (used != s.size()) throw std::invalid_argument("trailing junk");
      cfg.master_seed = seed;
    } catch (const std::exception&) {
      throw ConfigError("MASSFLOW_SEED", "MASSFLOW_SEED must be a 64-bit unsigned integer");
    }
  }
  return cfg;
}

EngineOptions engine_options(const CommonArgs& args) {
  EngineOptions opt;
  opt.drift = args.inject_drift;
  opt.merge_rule = merge_rule_from_string(args.merge_rule);
  return opt;
}

int cmd_simulate(const CommonArgs& args) {
  const SimConfig cfg = load_with_overrides(args);
  const EngineOptions opt = engine_options(args);
  std::filesystem::create_directories(args.out_dir);

  const auto t0 = std::chrono::steady_clock::now();
  const std::string dump_dir = args.dump_trajectories ? args.out_dir : std::string{};
  const EnsembleSummary summary = summarize_ensemble(cfg, opt, args.threads, dump_dir);
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  write_clusters_csv(args.out_dir + "/clusters.csv", summary);
  write_probes_csv(args.out_dir + "/probes.csv", summary);

  std::vector<OutputFileInfo> outputs;
  outputs.push_back(file_info(args.out_dir, "clusters.csv"));
  outputs.push_back(file_info(args.out_dir, "probes.csv"));
  if (args.dump_trajectories) {
    for (std::int64_t r = 0; r < cfg.replicas; ++r) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "traj_%05lld.bin", static_cast<long long>(r));
      outputs.push_back(file_info(args.out_dir, buf));
    }
  }
  write_manifest(args.out_dir + "/manifest.json", cfg, wall, outputs);
  std::cout << "simulate: " << cfg.replicas << " replicas, n=" << cfg.n
            << ", T=" << cfg.horizon << " -> " << args.out_dir << "\n";
  return 0;
}

int cmd_verify(const CommonArgs& args, const std::string& checks_csv) {
  const SimConfig cfg = load_with_overrides(args);
  CheckContext ctx{cfg, engine_options(args), args.threads};

  std::vector<std::string> names;
  if (checks_csv.empty() || checks_csv == "all") {
    names = known_check_names();
  } else {
    std::stringstream ss(checks_csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!item.empty()) names.push_back(item);
    }
  }

  std::filesystem::create_directories(args.out_dir);
  const VerificationReport rep = run_selected_checks(ctx, names);
  write_report_json(args.out_dir + "/report.json", rep);
  {
    std::ofstream table(args.out_dir + "/report.txt");
    print_report_table(table, rep);
  }
  print_report_table(std::cout, rep);
  return rep.all_pass() ? 0 : 4;
}

int cmd_localtime(const CommonArgs& args, double a_min, double a_max, double a_step,
                  std::vector<double> t_list) {
  SimConfig cfg = load_with_overrides(args);
  const EngineOptions opt = engine_options(args);
  if (!(a_step > 0.0)) throw ConfigError("a-step", "a-step must be positive");
  if (!(a_max > a_min)) throw ConfigError("a-range", "a-max must exceed a-min");
  cfg.record_stride = 1;
  if (t_list.empty()) t_list = {cfg.horizon / 2.0, cfg.horizon};

  const auto na = static_cast<Eigen::Index>(std::floor((a_max - a_min) / a_step)) + 1;
  ArrayXd a_grid(na);
  for (Eigen::Index i = 0; i < na; ++i) a_grid[i] = a_min + a_step * static_cast<double>(i);

  // Fixed smooth bump with compact support inside (0,1) for the duality check.
  const double c = 0.5, w = 0.45;
  const TestFunction bump = TestFunction::plain([c, w](double x) {
    const double z = (x - c) / w;
    if (std::abs(z) >= 1.0) return 0.0;
    return std::exp(-1.0 / (1.0 - z * z));
  });

  struct Feature {
    std::vector<ArrayXd> profiles;   // one per requested t
    std::vector<double> rel_residual;
  };
  const auto features = ensemble_map(cfg, opt, args.threads, [&](const TrajectoryRecord& rec) {
    Feature f;
    for (double t : t_list) {
      const LocalTimeProfile prof = local_time_tanaka(rec, a_grid, t);
      // trapezoid in a
      double fl = 0.0;
      for (Eigen::Index i = 0; i + 1 < na; ++i)
        fl += 0.5 * (bump.f(prof.a[i]) * prof.L[i] + bump.f(prof.a[i + 1]) * prof.L[i + 1]) *
              (prof.a[i + 1] - prof.a[i]);
      const double occ = occupation_integral(rec, bump, prof.t);
      f.profiles.push_back(prof.L);
      f.rel_residual.push_back(std::abs(2.0 * fl - occ) / std::max(occ, 1e-300));
    }
    return f;
  });

  std::filesystem::create_directories(args.out_dir);
  {
    std::ofstream out(args.out_dir + "/localtime.csv");
    if (!out) throw IoError("cannot open output file: " + args.out_dir + "/localtime.csv");
    out << "a,t,L_mean,L_se\n";
    char buf[40];
    for (std::size_t it = 0; it < t_list.size(); ++it) {
      for (Eigen::Index i = 0; i < na; ++i) {
        Accumulator acc;
        for (const auto& f : features) acc.add(f.profiles[it][i]);
        std::snprintf(buf, sizeof(buf), "%.17g", a_grid[i]);
        out << buf << ',';
        std::snprintf(buf, sizeof(buf), "%.17g", t_list[it]);
        out << buf << ',';
        std::snprintf(buf, sizeof(buf), "%.17g", acc.mean());
        out << buf << ',';
        std::snprintf(buf, sizeof(buf), "%.17g", acc.se());
        out << buf << '\n';
      }
    }
  }

  VerificationReport rep;
  for (std::size_t it = 0; it < t_list.size(); ++it) {
    Accumulator acc;
    double worst = 0.0;
    for (const auto& f : features) {
      acc.add(f.rel_residual[it]);
      worst = std::max(worst, f.rel_residual[it]);
    }
    CheckResult r;
    char tb[32];
    std::snprintf(tb, sizeof(tb), "%g", t_list[it]);
    r.name = std::string("localtime/duality(t=") + tb + ")";
    r.estimate = acc.mean();
    r.se = acc.se();
    r.target = 0.05;
    r.rule = "pathwise-tolerance[0.05]";
    r.pass = worst <= 0.05;
    rep.add(r);
  }
  write_report_json(args.out_dir + "/report.json", rep);
  print_report_table(std::cout, rep);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Monte Carlo simulator and verification harness for coalescing heavy diffusion particles on the line"};
  app.require_subcommand(1);

  CommonArgs sim_args, ver_args, lt_args;
  std::string checks_csv = "all";
  double a_min = -0.25, a_max = 1.25, a_step = 1e-3;
  std::vector<double> t_list;

  auto* sim = app.add_subcommand("simulate", "run the ensemble and write summary CSVs");
  add_common(sim, sim_args);
  sim->add_flag("--dump-trajectories", sim_args.dump_trajectories,
                "write per-replica binary trajectory dumps");

  auto* ver = app.add_subcommand("verify", "run statistical checks and write a report");
  add_common(ver, ver_args);
  ver->add_option("--checks", checks_csv, "comma-separated check names or 'all'");

  auto* lt = app.add_subcommand("localtime", "estimate local-time profiles");
  add_common(lt, lt_args);
  lt->add_option("--a-min", a_min, "lowest level");
  lt->add_option("--a-max", a_max, "highest level");
  lt->add_option("--a-step", a_step, "level grid step");
  lt->add_option("--times", t_list, "times at which to evaluate L(a,t)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) return cmd_simulate(sim_args);
    if (ver->parsed()) return cmd_verify(ver_args, checks_csv);
    if (lt->parsed()) return cmd_localtime(lt_args, a_min, a_max, a_step, t_list);
  } catch (const ConfigError& e) {
    std::cerr << "config error (" << e.field << "): " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
