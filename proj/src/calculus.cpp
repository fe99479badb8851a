#include "massflow/calculus.hpp"

#include <algorithm>
#include <cmath>

namespace massflow {

namespace {

void require_stride_one(const TrajectoryRecord& rec, const char* op) {
  if (rec.config.record_stride != 1)
    throw std::invalid_argument(std::string(op) +
                                " requires record_stride == 1");
}

// Successor of cluster c (its snapshot-to-snapshot continuation): the cluster
// in `next` whose interval contains c's interval.
struct SuccessorWalk {
  const std::vector<std::int32_t>& next_hi;
  Eigen::Index j = 0;
  Eigen::Index advance(std::int32_t hi_c) {
    while (next_hi[static_cast<std::size_t>(j)] < hi_c) ++j;
    return j;
  }
};

}  // namespace

TestFunction TestFunction::plain(std::function<double(double)> f, double bound) {
  TestFunction tf;
  tf.f = std::move(f);
  tf.bound_f = bound;
  return tf;
}

TestFunction TestFunction::with_derivatives(std::function<double(double)> f,
                                            std::function<double(double)> d1,
                                            std::function<double(double)> d2,
                                            std::optional<double> unit_integral) {
  TestFunction tf;
  tf.f = std::move(f);
  tf.d1 = std::move(d1);
  tf.d2 = std::move(d2);
  tf.unit_integral = unit_integral;
  return tf;
}

TestFunction TestFunction::indicator_above(double a) {
  TestFunction tf;
  tf.f = [a](double x) { return x > a ? 1.0 : 0.0; };
  tf.bound_f = 1.0;
  return tf;
}

double TestFunction::fd_mismatch(double lo, double hi, int npts) const {
  double worst = 0.0;
  const double h1 = 1e-6 * std::max(1.0, std::max(std::abs(lo), std::abs(hi)));
  const double h2 = 1e-4 * std::max(1.0, std::max(std::abs(lo), std::abs(hi)));
  for (int i = 0; i < npts; ++i) {
    const double x = lo + (hi - lo) * static_cast<double>(i) / (npts - 1);
    if (d1) {
      const double fd = (f(x + h1) - f(x - h1)) / (2.0 * h1);
      worst = std::max(worst, std::abs(fd - d1(x)) / std::max(1.0, std::abs(d1(x))));
    }
    if (d2) {
      const double fd = (f(x + h2) - 2.0 * f(x) + f(x - h2)) / (h2 * h2);
      worst = std::max(worst, std::abs(fd - d2(x)) / std::max(1.0, std::abs(d2(x))));
    }
  }
  return worst;
}

double simpson_unit_integral(const std::function<double(double)>& f) {
  const int n = 1 << 12;  // even; abs error ~ |f''''|/(180 n^4)
  const double h = 1.0 / n;
  double acc = f(0.0) + f(1.0);
  for (int i = 1; i < n; ++i) acc += f(i * h) * (i % 2 ? 4.0 : 2.0);
  return acc * h / 3.0;
}

Eigen::Index grid_index(const TrajectoryRecord& rec, double t) {
  const auto& ts = rec.times;
  const auto it = std::lower_bound(ts.begin(), ts.end(), t - 1e-9);
  if (it == ts.end() || std::abs(*it - t) > 1e-9 * std::max(1.0, std::abs(t)) + 1e-12)
    throw std::invalid_argument("time " + std::to_string(t) +
                                " is not on the recorded grid");
  return static_cast<Eigen::Index>(it - ts.begin());
}

double mass_at(const TrajectoryRecord& rec, double u, double t) {
  const Eigen::Index j = grid_index(rec, t);
  const auto& snap = rec.snapshots[static_cast<std::size_t>(j)];
  const std::int64_t k = probe_index(u, rec.config.n);
  const auto it = std::lower_bound(snap.hi.begin(), snap.hi.end(),
                                   static_cast<std::int32_t>(k));
  if (it == snap.hi.end()) throw InternalCorruption("probe index not covered");
  return snap.mass[static_cast<Eigen::Index>(it - snap.hi.begin())];
}

ArrayXd realized_qv(const Eigen::Ref<const ArrayXd>& path) {
  if (path.size() < 2)
    throw std::invalid_argument("realized_qv needs at least 2 grid points");
  ArrayXd out(path.size());
  out[0] = 0.0;
  for (Eigen::Index i = 1; i < path.size(); ++i) {
    const double d = path[i] - path[i - 1];
    out[i] = out[i - 1] + d * d;
  }
  return out;
}

ArrayXd stochastic_integral_path(const TrajectoryRecord& rec, const TestFunction& phi) {
  require_stride_one(rec, "stochastic_integral");
  const std::size_t steps = rec.snapshots.size();
  ArrayXd out(static_cast<Eigen::Index>(steps));
  out[0] = 0.0;
  for (std::size_t i = 0; i + 1 < steps; ++i) {
    const Snapshot& a = rec.snapshots[i];
    const Snapshot& b = rec.snapshots[i + 1];
    SuccessorWalk succ{b.hi};
    double inc = 0.0;
    for (Eigen::Index c = 0; c < a.pos.size(); ++c) {
      const Eigen::Index cn = succ.advance(a.hi[static_cast<std::size_t>(c)]);
      inc += a.mass[c] * phi.f(a.pos[c]) * (b.pos[cn] - a.pos[c]);
    }
    out[static_cast<Eigen::Index>(i) + 1] = out[static_cast<Eigen::Index>(i)] + inc;
  }
  return out;
}

double stochastic_integral(const TrajectoryRecord& rec, const TestFunction& phi, double t) {
  const Eigen::Index j = grid_index(rec, t);
  return stochastic_integral_path(rec, phi)[j];
}

namespace {

double occupation_sum(const TrajectoryRecord& rec, const TestFunction& f,
                      double t, RiemannEndpoint ep, bool weighted) {
  require_stride_one(rec, "occupation_integral");
  const Eigen::Index jt = grid_index(rec, t);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < jt; ++i) {
    const double dt_i = rec.times[static_cast<std::size_t>(i) + 1] -
                        rec.times[static_cast<std::size_t>(i)];
    const Snapshot& s =
        rec.snapshots[static_cast<std::size_t>(ep == RiemannEndpoint::left ? i : i + 1)];
    double inner = 0.0;
    if (weighted) {
      for (Eigen::Index c = 0; c < s.pos.size(); ++c)
        inner += s.mass[c] * f.f(s.pos[c]) / s.mass[c];
    } else {
      for (Eigen::Index c = 0; c < s.pos.size(); ++c) inner += f.f(s.pos[c]);
    }
    acc += dt_i * inner;
  }
  return acc;
}

}  // namespace

double occupation_integral(const TrajectoryRecord& rec, const TestFunction& f,
                           double t, RiemannEndpoint ep) {
  return occupation_sum(rec, f, t, ep, false);
}

double occupation_integral_weighted(const TrajectoryRecord& rec, const TestFunction& f,
                                    double t, RiemannEndpoint ep) {
  return occupation_sum(rec, f, t, ep, true);
}

double inverse_mass_time_integral(const TrajectoryRecord& rec, Eigen::Index probe,
                                  double t, RiemannEndpoint ep) {
  require_stride_one(rec, "inverse_mass_time_integral");
  if (probe < 0 || probe >= rec.probe_mass.rows())
    throw std::invalid_argument("probe row out of range");
  const Eigen::Index jt = grid_index(rec, t);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < jt; ++i) {
    const double dt_i = rec.times[static_cast<std::size_t>(i) + 1] -
                        rec.times[static_cast<std::size_t>(i)];
    const Eigen::Index at = ep == RiemannEndpoint::left ? i : i + 1;
    acc += dt_i / rec.probe_mass(probe, at);
  }
  return acc;
}

double ito_residual(const TrajectoryRecord& rec, const TestFunction& phi,
                    double t, RiemannEndpoint ep) {
  if (!phi.has_derivatives())
    throw std::invalid_argument("ito_residual requires first and second derivative evaluators");
  require_stride_one(rec, "ito_residual");
  const Eigen::Index jt = grid_index(rec, t);

  const Snapshot& fin = rec.snapshots[static_cast<std::size_t>(jt)];
  double term_final = 0.0;
  for (Eigen::Index c = 0; c < fin.pos.size(); ++c)
    term_final += fin.mass[c] * phi.f(fin.pos[c]);

  // Initial value of the same functional. For the simulated system the label
  // integral of phi(y(u,0)) is exactly the mass-weighted cluster sum at t=0
  // (it converges to int_0^1 phi(u) du as n grows); using the continuum
  // integral instead would leave a spurious O(1/n) offset in R and break the
  // exact pathwise zero for linear phi.
  const Snapshot& ini = rec.snapshots.front();
  double term_init = 0.0;
  for (Eigen::Index c = 0; c < ini.pos.size(); ++c)
    term_init += ini.mass[c] * phi.f(ini.pos[c]);

  TestFunction d1 = TestFunction::plain(phi.d1, phi.bound_d1);
  const double si = stochastic_integral_path(rec, d1)[jt];

  TestFunction d2 = TestFunction::plain(phi.d2, phi.bound_d2);
  const double drift = occupation_integral(rec, d2, t, ep);

  return term_final - term_init - si - 0.5 * drift;
}

double plus_part_unit_integral(double a) {
  if (a >= 1.0) return 0.0;
  if (a <= 0.0) return 0.5 - a;
  return 0.5 * (1.0 - a) * (1.0 - a);
}

LocalTimeProfile local_time_tanaka(const TrajectoryRecord& rec, const ArrayXd& a_grid, double t) {
  require_stride_one(rec, "local_time_tanaka");
  for (Eigen::Index i = 1; i < a_grid.size(); ++i)
    if (!(a_grid[i] > a_grid[i - 1]))
      throw std::invalid_argument("level grid must be strictly increasing");
  const Eigen::Index jt = grid_index(rec, t);
  const Eigen::Index na = a_grid.size();

  // Indicator stochastic integral for every level at once. Per step, each
  // cluster contributes m*dx to all levels strictly below its pre-step
  // position; accumulate as a difference array over the grid.
  ArrayXd diff = ArrayXd::Zero(na + 1);
  for (Eigen::Index i = 0; i < jt; ++i) {
    const Snapshot& a = rec.snapshots[static_cast<std::size_t>(i)];
    const Snapshot& b = rec.snapshots[static_cast<std::size_t>(i) + 1];
    SuccessorWalk succ{b.hi};
    for (Eigen::Index c = 0; c < a.pos.size(); ++c) {
      const Eigen::Index cn = succ.advance(a.hi[static_cast<std::size_t>(c)]);
      const double w = a.mass[c] * (b.pos[cn] - a.pos[c]);
      // levels a_j < pos contribute; first excluded index is the first
      // grid point >= pos (ties count as 0: indicator is open at a).
      const auto* begin = a_grid.data();
      const Eigen::Index cut = static_cast<Eigen::Index>(
          std::lower_bound(begin, begin + na, a.pos[c]) - begin);
      diff[0] += w;
      diff[cut] -= w;
    }
  }
  ArrayXd indicator_si(na);
  double run = 0.0;
  for (Eigen::Index j = 0; j < na; ++j) {
    run += diff[j];
    indicator_si[j] = run;
  }

  // The subtracted initial term is the label integral of (y(u,0)-a)^+ for
  // the simulated step-function flow, summed exactly over the t=0 clusters;
  // it equals int_0^1 (u-a)^+ du up to O(1/n) and makes the below-the-range
  // cancellation exact pathwise.
  const Snapshot& ini = rec.snapshots.front();
  const Snapshot& fin = rec.snapshots[static_cast<std::size_t>(jt)];
  const auto plus_part = [](const Snapshot& s, double a) {
    double acc = 0.0;
    for (Eigen::Index c = s.pos.size() - 1; c >= 0 && s.pos[c] > a; --c)
      acc += s.mass[c] * (s.pos[c] - a);
    return acc;
  };

  LocalTimeProfile prof;
  prof.a = a_grid;
  prof.t = rec.times[static_cast<std::size_t>(jt)];
  prof.L.resize(na);
  for (Eigen::Index j = 0; j < na; ++j) {
    const double a = a_grid[j];
    prof.L[j] = plus_part(fin, a) - plus_part(ini, a) - indicator_si[j];
  }
  return prof;
}

std::optional<double> meeting_time(const TrajectoryRecord& rec, double u, double v) {
  const std::int64_t ku = probe_index(u, rec.config.n);
  const std::int64_t kv = probe_index(v, rec.config.n);
  if (ku == kv) return 0.0;
  const auto lo = static_cast<std::int32_t>(std::min(ku, kv));
  const auto hi = static_cast<std::int32_t>(std::max(ku, kv));
  for (const auto& ev : rec.events)
    if (ev.lo <= lo && ev.hi >= hi) return ev.time;
  return std::nullopt;
}

std::int64_t cluster_count(const TrajectoryRecord& rec, double t) {
  (void)grid_index(rec, t);  // enforce the on-grid contract
  std::int64_t merges = 0;
  for (const auto& ev : rec.events)
    if (ev.time <= t) ++merges;
  return rec.config.n - merges;
}

}  // namespace massflow
