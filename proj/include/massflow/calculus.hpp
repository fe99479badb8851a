#pragma once

#include "massflow/types.hpp"

#include <functional>
#include <limits>
#include <optional>

namespace massflow {

// Scalar test function with optional derivative evaluators and declared
// sup-norm bounds. The unit_integral, when set, is the exact value of
// int_0^1 f(u) du; otherwise quadrature (composite Simpson, abs. tolerance
// ~1e-10 for smooth f) is used where that integral is needed.
struct TestFunction {
  std::function<double(double)> f;
  std::function<double(double)> d1;
  std::function<double(double)> d2;
  double bound_f = std::numeric_limits<double>::infinity();
  double bound_d1 = std::numeric_limits<double>::infinity();
  double bound_d2 = std::numeric_limits<double>::infinity();
  std::optional<double> unit_integral;

  bool has_derivatives() const { return static_cast<bool>(d1) && static_cast<bool>(d2); }

  static TestFunction plain(std::function<double(double)> f, double bound = std::numeric_limits<double>::infinity());
  static TestFunction with_derivatives(std::function<double(double)> f,
                                       std::function<double(double)> d1,
                                       std::function<double(double)> d2,
                                       std::optional<double> unit_integral = {});
  // Strict indicator of (a, +infinity): ties x == a count as 0.
  static TestFunction indicator_above(double a);

  // Max relative mismatch of d1/d2 against centered finite differences of f
  // over an equispaced grid on [lo,hi].
  double fd_mismatch(double lo, double hi, int npts = 101) const;
};

double simpson_unit_integral(const std::function<double(double)>& f);

// Which end of each time step supplies the cluster configuration in the
// Lebesgue-in-time sums (occupation integral, Ito drift, the 1/m target of
// the QV identity). Stochastic sums are always left-endpoint (predictable).
enum class RiemannEndpoint { left, right };

// Project-wide default for the Lebesgue-in-time sums. The end-of-step
// cluster configuration is the consistent choice here: most coalescence at
// these n happens inside the first few steps, so start-of-step evaluation
// would charge the whole first step at the pre-collapse rate (an O(n*dt)
// overshoot that does not vanish at fixed dt), while end-of-step evaluation
// converges. Stochastic sums are unaffected and stay predictable.
inline constexpr RiemannEndpoint kTimeSumEndpoint = RiemannEndpoint::right;

// Index of t on the recorded grid; off-grid times are rejected rather than
// interpolated.
Eigen::Index grid_index(const TrajectoryRecord& rec, double t);

// Mass of the cluster containing probe u at recorded time t.
double mass_at(const TrajectoryRecord& rec, double u, double t);

// Partial sums of squared increments, aligned to the grid: out[0] = 0,
// out[j] = sum_{i<j} (path[i+1]-path[i])^2.
ArrayXd realized_qv(const Eigen::Ref<const ArrayXd>& path);

// Discretized stochastic integral with respect to the flow:
//   sum over steps and clusters of  mass * phi(pos_before) * (pos_after - pos_before),
// where pos_after follows the cluster into its successor. The label integral
// is an exact mass-weighted cluster sum; phi is evaluated at the left
// endpoint (predictable). Requires record_stride == 1.
ArrayXd stochastic_integral_path(const TrajectoryRecord& rec, const TestFunction& phi);
double stochastic_integral(const TrajectoryRecord& rec, const TestFunction& phi, double t);

// Occupation integral  int_0^1 int_0^{tau(u) ^ t} f(y(u,s)) ds  estimated as
// sum over steps of dt * sum over distinct clusters of f(position).
double occupation_integral(const TrajectoryRecord& rec, const TestFunction& f,
                           double t, RiemannEndpoint ep = kTimeSumEndpoint);
// Algebraically identical mass-weighted form, sum of mass*f(pos)/mass;
// exercises the same identity through the weighted route.
double occupation_integral_weighted(const TrajectoryRecord& rec, const TestFunction& f,
                                    double t, RiemannEndpoint ep = kTimeSumEndpoint);

// Time-discretized int_0^t ds/m(u,s) along one probe's mass path; target of
// the quadratic-variation identity.
double inverse_mass_time_integral(const TrajectoryRecord& rec, Eigen::Index probe,
                                  double t, RiemannEndpoint ep = kTimeSumEndpoint);

// Ito-formula residual
//   R(t) = sum_c m phi(x_c(t)) - sum_c m phi(x_c(0))
//          - SI(phi', t) - 1/2 * sum_steps dt * sum_c phi''(x_c),
// exactly zero pathwise for linear phi; smallness is the test otherwise.
// Both boundary terms are the exact label integrals of phi(y(u,.)) for the
// step-function flow; the t=0 one equals int_0^1 phi(u) du up to O(1/n).
// Requires derivative evaluators and record_stride == 1.
double ito_residual(const TrajectoryRecord& rec, const TestFunction& phi,
                    double t, RiemannEndpoint ep = kTimeSumEndpoint);

struct LocalTimeProfile {
  ArrayXd a;  // increasing level grid
  ArrayXd L;  // local time per level at time t
  double t = 0.0;
};

// Tanaka representation on a level grid:
//   L(a,t) = sum_c m (x_c(t)-a)^+  -  int_0^1 (u-a)^+ du  -  SI(1_{(a,inf)}, t),
// with the middle term in closed form. Requires record_stride == 1.
LocalTimeProfile local_time_tanaka(const TrajectoryRecord& rec, const ArrayXd& a_grid, double t);

// Closed form of int_0^1 (u-a)^+ du.
double plus_part_unit_integral(double a);

// First recorded time at which probes u and v share a cluster; nullopt when
// they have not met by the horizon (censored).
std::optional<double> meeting_time(const TrajectoryRecord& rec, double u, double v);

// Number of distinct clusters at recorded time t (n minus events up to t).
std::int64_t cluster_count(const TrajectoryRecord& rec, double t);

}  // namespace massflow
