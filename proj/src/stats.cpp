#include "massflow/stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace massflow {

double Accumulator::variance() const {
  if (count < 2) return 0.0;
  const double m = mean();
  const double v = (sumsq - static_cast<double>(count) * m * m) /
                   static_cast<double>(count - 1);
  return v > 0.0 ? v : 0.0;
}

double Accumulator::stddev() const { return std::sqrt(variance()); }

double Accumulator::se() const {
  return count ? stddev() / std::sqrt(static_cast<double>(count)) : 0.0;
}

double normal_cdf(double x) {
  return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

double kolmogorov_cdf(double x) {
  if (x <= 0.0) return 0.0;
  // P(K <= x) = 1 - 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 x^2)
  double s = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * x * x);
    s += (k % 2 ? term : -term);
    if (term < 1e-16) break;
  }
  const double p = 1.0 - 2.0 * s;
  return std::clamp(p, 0.0, 1.0);
}

double kolmogorov_critical(double alpha) {
  double lo = 0.0, hi = 4.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (1.0 - kolmogorov_cdf(mid) > alpha)
      lo = mid;
    else
      hi = mid;
  }
  return hi;
}

double ks_statistic_normal(std::vector<double>& sample) {
  if (sample.empty()) throw std::invalid_argument("empty sample");
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double F = normal_cdf(sample[i]);
    const double lo = static_cast<double>(i) / n;
    const double hi = static_cast<double>(i + 1) / n;
    d = std::max({d, std::abs(F - lo), std::abs(hi - F)});
  }
  return d;
}

double ks_statistic_two_sample(std::vector<double>& a, std::vector<double>& b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na -
                             static_cast<double>(j) / nb));
  }
  return d;
}

bool ks_reject_normal(double d, std::int64_t n, double alpha) {
  return std::sqrt(static_cast<double>(n)) * d > kolmogorov_critical(alpha);
}

double ks_two_sample_critical(std::int64_t n, std::int64_t m, double alpha) {
  const double eff = static_cast<double>(n) * static_cast<double>(m) /
                     static_cast<double>(n + m);
  return kolmogorov_critical(alpha) / std::sqrt(eff);
}

bool ks_reject_two_sample(double d, std::int64_t n, std::int64_t m, double alpha) {
  return d > ks_two_sample_critical(n, m, alpha);
}

LineFit fit_line(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 3)
    throw std::invalid_argument("fit_line needs matched samples of size >= 3");
  const double n = static_cast<double>(x.size());
  double sx = 0.0, sy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0.0) throw std::invalid_argument("degenerate abscissa");
  LineFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double rss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - fit.intercept - fit.slope * x[i];
    rss += r * r;
  }
  fit.slope_se = std::sqrt(rss / (n - 2.0) / sxx);
  return fit;
}

double lag1_autocorr(std::span<const double> xs) {
  if (xs.size() < 3) throw std::invalid_argument("sample too short");
  double mean = 0.0;
  for (double v : xs) mean += v;
  mean /= static_cast<double>(xs.size());
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double c = xs[i] - mean;
    den += c * c;
    if (i + 1 < xs.size()) num += c * (xs[i + 1] - mean);
  }
  return den == 0.0 ? 0.0 : num / den;
}

}  // namespace massflow
