#pragma once

#include "massflow/engine.hpp"
#include "massflow/types.hpp"

#include <span>
#include <string>
#include <utility>
#include <vector>

namespace massflow {

// One verification entry. `rule` carries the decision rule and its
// parameters, so pass can be recomputed from the persisted entry alone.
struct CheckResult {
  std::string name;
  double estimate = 0.0;
  double se = 0.0;
  double target = 0.0;
  std::string rule;
  bool pass = true;
};

struct VerificationReport {
  std::vector<CheckResult> entries;
  bool all_pass() const;
  void add(CheckResult r) { entries.push_back(std::move(r)); }
};

struct CheckContext {
  SimConfig cfg;
  EngineOptions opt;
  int threads = 0;
};

// E y(u,t) = u at every requested probe and time (3*SE slack). Ensembles
// smaller than 30 replicas are flagged undersized, not failed.
void check_martingale_mean(const CheckContext& ctx, std::span<const double> u_set,
                           std::span<const double> t_set, VerificationReport& rep);

// log-log growth of E(y(u,t)-u)^2 over a time grid spanning >= 1.5 decades,
// plus the pathwise isometry cross-check against int ds/m at the last time.
void check_second_moment_growth(const CheckContext& ctx, double u,
                                std::span<const double> t_grid,
                                VerificationReport& rep);

// log-log slope of E N(t), the nonincreasing E N(t) sqrt(t) diagnostic, and
// the E N(t_max) >= 5 guard (guard violations are reported inconclusive).
void check_cluster_count_scaling(const CheckContext& ctx,
                                 std::span<const double> t_grid,
                                 VerificationReport& rep);

// Tail bound P{1/m(u,t) > r} <= 0.798 (t r^3)^{-1/2} for r >= 2, plus
// E m^-beta sqrt(t) levels for beta in {0.5, 1, 1.4}.
void check_inverse_mass_tail(const CheckContext& ctx, double u,
                             std::span<const double> t_set,
                             std::span<const double> r_grid,
                             VerificationReport& rep);

// eta(t) = sum_c mass*pos is a Wiener process: realized QV over [0,T] within
// 5% of T, KS normality of standardized increments at level 0.01, lag-1
// increment autocorrelation consistent with 0.
void check_eta_wiener(const CheckContext& ctx, VerificationReport& rep);

// Survival of the pair meeting time dominated by the zero-hitting time of a
// rate-2 Brownian motion started at v-u: P{tau >= t} <= 2 Phi((v-u)/sqrt(2t)) - 1.
void check_meeting_domination(const CheckContext& ctx,
                              std::span<const std::pair<double, double>> pairs,
                              std::span<const double> t_grid,
                              VerificationReport& rep);

// Realized covariation of two probe paths accumulated strictly before their
// meeting; mean consistent with 0. Post-meeting covariation is reported
// informationally (it equals the shared path's QV by construction).
void check_c5_zero_covariation(const CheckContext& ctx,
                               std::span<const std::pair<double, double>> pairs,
                               double t, VerificationReport& rep);

// Distributional stability of y(0.5, T) along an n grid: two-sample KS
// distances between consecutive n, decreasing or within the 1% critical band.
void stability_in_n(const SimConfig& base, const EngineOptions& opt,
                    std::span<const std::int64_t> n_grid, int threads,
                    VerificationReport& rep);

// Known check names for CLI selection, in canonical order.
const std::vector<std::string>& known_check_names();

// Runs the named checks (or all) with parameter sets derived from the
// config: probes from u_probes, time grids from the horizon.
VerificationReport run_selected_checks(const CheckContext& ctx,
                                       const std::vector<std::string>& names);

}  // namespace massflow
