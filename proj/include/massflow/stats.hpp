#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <vector>

namespace massflow {

// Running first/second moments with an associative, commutative merge, so
// per-replica partials can be combined in any grouping.
struct Accumulator {
  std::int64_t count = 0;
  double sum = 0.0;
  double sumsq = 0.0;

  void add(double x) {
    ++count;
    sum += x;
    sumsq += x * x;
  }
  void merge(const Accumulator& o) {
    count += o.count;
    sum += o.sum;
    sumsq += o.sumsq;
  }
  double mean() const { return count ? sum / static_cast<double>(count) : 0.0; }
  // Unbiased sample variance.
  double variance() const;
  double stddev() const;
  // Standard error of the mean, sample-std / sqrt(count).
  double se() const;
};

// Standard normal CDF.
double normal_cdf(double x);

// Kolmogorov distribution P(K <= x) (asymptotic null law of sqrt(N) D_N).
double kolmogorov_cdf(double x);

// Upper quantile: smallest x with P(K > x) <= alpha.
double kolmogorov_critical(double alpha);

// One-sample KS statistic against the standard normal; sorts its input.
double ks_statistic_normal(std::vector<double>& sample);

// Two-sample KS statistic; sorts both inputs.
double ks_statistic_two_sample(std::vector<double>& a, std::vector<double>& b);

// Simple-hypothesis one-sample test: reject iff sqrt(N) D > K_alpha.
bool ks_reject_normal(double d, std::int64_t n, double alpha);

// Two-sample test: reject iff sqrt(nm/(n+m)) D > K_alpha.
bool ks_reject_two_sample(double d, std::int64_t n, std::int64_t m, double alpha);
double ks_two_sample_critical(std::int64_t n, std::int64_t m, double alpha);

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_se = 0.0;
};

// Ordinary least squares y ~ intercept + slope * x.
LineFit fit_line(std::span<const double> x, std::span<const double> y);

// Lag-1 sample autocorrelation.
double lag1_autocorr(std::span<const double> xs);

}  // namespace massflow
