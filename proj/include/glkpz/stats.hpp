#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace glkpz {

struct MeanSE {
  double mean = 0.0;
  double var = 0.0;  // unbiased sample variance
  double se = 0.0;
  std::size_t n = 0;
};

MeanSE mean_se(std::span<const double> v);

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_se = 0.0;
};

// least squares fit of y on x; weights w (inverse variances) when non-empty
LineFit ols(std::span<const double> x, std::span<const double> y, std::span<const double> w = {});

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double v) const { return lo <= v && v <= hi; }
  bool inside(double a, double b) const { return a <= lo && hi <= b; }
};

// Percentile bootstrap over replicas: stat receives a resampled list of replica indices.
Interval bootstrap_ci(std::size_t n_replicas, const std::function<double(std::span<const std::size_t>)>& stat,
                      int resamples, std::uint64_t seed, double level = 0.95);

// Kolmogorov-Smirnov distance of a sample from a continuous CDF
double ks_statistic(std::vector<double> sample, const std::function<double(double)>& cdf);
// asymptotic p-value with the finite-n correction (sqrt(n) + 0.12 + 0.11/sqrt(n)) D
double ks_pvalue(double D, std::size_t n);
// Kolmogorov survival function Q(t) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 t^2)
double kolmogorov_q(double t);

double correlation(std::span<const double> a, std::span<const double> b);
double quantile(std::vector<double> v, double p);
double median(std::vector<double> v);

}  // namespace glkpz
