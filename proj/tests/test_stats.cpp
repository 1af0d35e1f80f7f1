#include <cmath>

#include "doctest.h"

#include "glkpz/rng.hpp"
#include "glkpz/stats.hpp"

using namespace glkpz;
using doctest::Approx;

TEST_CASE("mean and standard error") {
  const std::vector<double> v{1.0, 2.0, 3.0, 4.0};
  const auto ms = mean_se(v);
  CHECK(ms.mean == 2.5);
  CHECK(ms.var == Approx(5.0 / 3.0));
  CHECK(ms.se == Approx(std::sqrt(5.0 / 12.0)));
  CHECK(ms.n == 4);
}

TEST_CASE("least squares") {
  const std::vector<double> x{0, 1, 2, 3}, y{1, 3, 5, 7};
  const auto f = ols(x, y);
  CHECK(f.slope == Approx(2.0));
  CHECK(f.intercept == Approx(1.0));
  CHECK(f.slope_se == Approx(0.0).epsilon(1e-12));
  const std::vector<double> w{1, 1, 1, 1};
  CHECK(ols(x, y, w).slope == Approx(2.0));
}

TEST_CASE("bootstrap interval covers the sample mean") {
  Rng rng = substream(1, 0, 0);
  std::normal_distribution<double> nd;
  std::vector<double> v(500);
  for (auto& x : v) x = nd(rng);
  auto mean_of = [&](std::span<const std::size_t> idx) {
    double s = 0.0;
    for (auto i : idx) s += v[i];
    return s / idx.size();
  };
  const auto ci = bootstrap_ci(v.size(), mean_of, 400, 7);
  const auto ms = mean_se(v);
  CHECK(ci.contains(ms.mean));
  CHECK(ci.hi - ci.lo == Approx(2.0 * 1.96 * ms.se).epsilon(0.25));
  const auto again = bootstrap_ci(v.size(), mean_of, 400, 7);
  CHECK(again.lo == ci.lo);
  CHECK(again.hi == ci.hi);
}

TEST_CASE("Kolmogorov-Smirnov") {
  CHECK(kolmogorov_q(1.0) == Approx(0.26999967).epsilon(1e-7));
  CHECK(kolmogorov_q(0.0) == 1.0);
  const std::vector<double> grid{0.1, 0.3, 0.5, 0.7, 0.9};
  CHECK(ks_statistic(grid, [](double a) { return a; }) == Approx(0.1));
  Rng rng = substream(2, 0, 0);
  std::uniform_real_distribution<double> u;
  std::vector<double> v(5000);
  for (auto& x : v) x = u(rng);
  CHECK(ks_pvalue(ks_statistic(v, [](double a) { return a; }), v.size()) > 0.001);
  CHECK(ks_pvalue(ks_statistic(v, [](double a) { return a * a; }), v.size()) < 1e-6);
}

TEST_CASE("correlation and quantiles") {
  const std::vector<double> a{1, 2, 3, 4}, b{2, 4, 6, 8}, c{4, 3, 2, 1};
  CHECK(correlation(a, b) == Approx(1.0));
  CHECK(correlation(a, c) == Approx(-1.0));
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
  CHECK(quantile({0.0, 1.0, 2.0, 3.0, 4.0}, 0.25) == Approx(1.0));
}
