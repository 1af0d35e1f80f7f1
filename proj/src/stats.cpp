#include "glkpz/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "glkpz/errors.hpp"
#include "glkpz/rng.hpp"

namespace glkpz {

MeanSE mean_se(std::span<const double> v) {
  MeanSE r;
  r.n = v.size();
  if (v.empty()) return r;
  r.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() > 1) {
    double s = 0.0;
    for (double x : v) s += (x - r.mean) * (x - r.mean);
    r.var = s / static_cast<double>(v.size() - 1);
    r.se = std::sqrt(r.var / static_cast<double>(v.size()));
  }
  return r;
}

LineFit ols(std::span<const double> x, std::span<const double> y, std::span<const double> w) {
  const std::size_t n = x.size();
  if (y.size() != n || (!w.empty() && w.size() != n)) fail(ErrorKind::shape, "ols: length mismatch");
  if (n < 2) fail(ErrorKind::domain, "ols: need at least two points");
  auto wt = [&](std::size_t i) { return w.empty() ? 1.0 : w[i]; };
  double sw = 0.0, sx = 0.0, sy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sw += wt(i);
    sx += wt(i) * x[i];
    sy += wt(i) * y[i];
  }
  const double mx = sx / sw, my = sy / sw;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += wt(i) * (x[i] - mx) * (x[i] - mx);
    sxy += wt(i) * (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0.0) fail(ErrorKind::domain, "ols: x values are all equal");
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  if (w.empty()) {
    if (n > 2) {
      double rss = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double r = y[i] - f.intercept - f.slope * x[i];
        rss += r * r;
      }
      f.slope_se = std::sqrt(rss / static_cast<double>(n - 2) / sxx);
    }
  } else {
    f.slope_se = std::sqrt(1.0 / sxx);
  }
  return f;
}

Interval bootstrap_ci(std::size_t n_replicas, const std::function<double(std::span<const std::size_t>)>& stat,
                      int resamples, std::uint64_t seed, double level) {
  if (n_replicas == 0) fail(ErrorKind::domain, "bootstrap_ci: no replicas");
  if (resamples < 1) fail(ErrorKind::domain, "bootstrap_ci: need at least one resample");
  Rng rng = substream(seed, 0, 0xb0075ULL);
  std::uniform_int_distribution<std::size_t> pick(0, n_replicas - 1);
  std::vector<std::size_t> idx(n_replicas);
  std::vector<double> vals;
  vals.reserve(resamples);
  for (int b = 0; b < resamples; ++b) {
    for (auto& i : idx) i = pick(rng);
    vals.push_back(stat(idx));
  }
  const double a = 0.5 * (1.0 - level);
  return {quantile(vals, a), quantile(vals, 1.0 - a)};
}

double ks_statistic(std::vector<double> sample, const std::function<double(double)>& cdf) {
  if (sample.empty()) fail(ErrorKind::domain, "ks_statistic: empty sample");
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double D = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double F = cdf(sample[i]);
    D = std::max({D, F - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - F});
  }
  return D;
}

double kolmogorov_q(double t) {
  if (t <= 0.0) return 1.0;
  if (t < 0.2) return 1.0;
  double s = 0.0;
  for (int k = 1; k <= 200; ++k) {
    const double term = std::exp(-2.0 * k * k * t * t);
    s += (k % 2 == 1 ? term : -term);
    if (term < 1e-18) break;
  }
  return std::clamp(2.0 * s, 0.0, 1.0);
}

double ks_pvalue(double D, std::size_t n) {
  const double sn = std::sqrt(static_cast<double>(n));
  return kolmogorov_q((sn + 0.12 + 0.11 / sn) * D);
}

double correlation(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) fail(ErrorKind::shape, "correlation: need equal lengths of at least 2");
  const auto ma = mean_se(a).mean, mb = mean_se(b).mean;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

double quantile(std::vector<double> v, double p) {
  if (v.empty()) fail(ErrorKind::domain, "quantile: empty sample");
  std::sort(v.begin(), v.end());
  const double pos = std::clamp(p, 0.0, 1.0) * static_cast<double>(v.size() - 1);
  const auto i = static_cast<std::size_t>(std::floor(pos));
  if (i + 1 >= v.size()) return v.back();
  const double th = pos - static_cast<double>(i);
  return v[i] + th * (v[i + 1] - v[i]);
}

double median(std::vector<double> v) { return quantile(std::move(v), 0.5); }

}  // namespace glkpz
