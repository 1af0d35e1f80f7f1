#include <cmath>
#include <numeric>

#include "doctest.h"

#include "glkpz/errors.hpp"
#include "glkpz/kernels.hpp"
#include "glkpz/stats.hpp"

using namespace glkpz;
using doctest::Approx;

TEST_CASE("heat kernel basics") {
  const auto c = compute_constants(PotentialSpec::gaussian(), {1.0});
  const int N = 16, M = 64;
  const double cN = N * N * c.alpha + 0.5 * N * c.lambda * c.lambda;
  const auto I = heat_kernel(c, N, M, 0.3, 0.3);
  for (int x = 0; x < M; ++x)
    for (int y = 0; y < M; ++y) CHECK(I.at(x, y) == Approx(x == y ? 1.0 : 0.0).epsilon(1e-14));
  CHECK_THROWS_AS(heat_kernel(c, N, M, 0.3, 0.2), Error);

  const double tau = 0.01;
  const auto H = heat_kernel(c, N, M, 0.0, tau);
  for (int x = 0; x < M; ++x) {
    double s = 0.0;
    for (int y = 0; y < M; ++y) s += H.at(x, y);
    CHECK(std::abs(s - 1.0) <= 1e-12);
  }
  double var = 0.0;
  for (int y = 0; y < M; ++y) {
    const int d = y < M / 2 ? y : y - M;
    var += d * d * H.at(0, y);
    CHECK(H.at(0, y) >= -1e-15);
  }
  CHECK(var == Approx(2.0 * cN * tau).epsilon(1e-6));
  CHECK(H.column(5)[7] == Approx(H.at(7, 5)));
}

TEST_CASE("heat kernel probes") {
  const auto c = compute_constants(PotentialSpec::gaussian(), {1.0});
  const int N = 16, M = 64;
  const auto H = heat_kernel(c, N, M, 0.0, 0.02);
  CHECK(hk_probe(H, 0.0, 0, N).l1_weighted == Approx(1.0).epsilon(1e-12));
  CHECK(hk_probe(H, 1.0, 0, N).l1_weighted > 1.0);
  CHECK(hk_probe(heat_kernel(c, N, M, 0.0, 1e-9), 0.0, 0, N).sup_weighted == Approx(1.0).epsilon(1e-5));
  // the sup is non-increasing in time at kappa = 0
  double prev = 2.0;
  for (int k = 14; k >= 2; --k) {
    const double s = hk_probe(heat_kernel(c, N, M, 0.0, std::ldexp(1.0, -k)), 0.0, 0, N).sup_weighted;
    CHECK(s <= prev + 1e-15);
    prev = s;
  }
}

TEST_CASE("Chapman-Kolmogorov for heat kernels") {
  const auto c = compute_constants(PotentialSpec::gaussian(), {1.0});
  CHECK(chapman_kolmogorov_residual(c, 16, 64, 0.0, 0.004, 0.01) <= 1e-10);
  CHECK(chapman_kolmogorov_residual(c, 16, 64, 0.0, 0.01, 0.01) <= 1e-14);
  CHECK(chapman_kolmogorov_residual(c, 16, 64, 0.0, 0.0, 0.01) <= 1e-14);
}

TEST_CASE("Duhamel application") {
  const auto c = compute_constants(PotentialSpec::gaussian(), {1.0});
  const int M = 32;
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(M, M);
  std::vector<double> v(M);
  for (int i = 0; i < M; ++i) v[i] = std::sin(i);
  CHECK(duhamel_apply(I, v) == v);
  const auto H = heat_kernel(c, 8, M, 0.0, 0.01);
  for (double x : duhamel_apply(H, std::vector<double>(M, 3.0))) CHECK(x == Approx(3.0).epsilon(1e-13));
  std::vector<double> delta(M, 0.0);
  delta[4] = 1.0;
  const auto col = H.column(4);
  const auto out = duhamel_apply(H, delta);
  const auto dense = duhamel_apply(H.matrix(), delta);
  for (int i = 0; i < M; ++i) {
    CHECK(out[i] == Approx(col[i]).epsilon(1e-12));
    CHECK(dense[i] == Approx(col[i]).epsilon(1e-12));
  }
  CHECK_THROWS_AS(duhamel_apply(I, std::vector<double>(M + 1, 0.0)), Error);
}

TEST_CASE("SHE solver") {
  const int N = 8, M = 32;
  std::vector<double> Q0(M);
  for (int i = 0; i < M; ++i) Q0[i] = 1.0 + 0.5 * std::cos(2.0 * M_PI * i / M);

  SUBCASE("zero coupling reduces to the heat flow") {
    const auto c = compute_constants(PotentialSpec::gaussian(), {0.0});
    FreshNoise noise(substream(1, 0, 0), M, 1e-4);
    const auto snaps = she_run(Q0, c, N, noise, 100, 100);
    const auto ref = duhamel_apply(heat_kernel(c, N, M, 0.0, 0.01), Q0);
    for (int i = 0; i < M; ++i) CHECK(std::abs(snaps.back().Q[i] - ref[i]) <= 1e-8);
  }

  SUBCASE("mean follows the heat flow and solutions stay non-negative") {
    const auto c = compute_constants(PotentialSpec::gaussian(), {1.0});
    const int R = 400;
    std::vector<double> q5;
    bool positive = true;
    for (int r = 0; r < R; ++r) {
      FreshNoise noise(substream(2, r, 0), M, 1e-4);
      const auto snaps = she_run(Q0, c, N, noise, 100, 100);
      for (double v : snaps.back().Q) positive = positive && v >= 0.0;
      q5.push_back(snaps.back().Q[5]);
    }
    CHECK(positive);
    const auto ms = mean_se(q5);
    const double ref = duhamel_apply(heat_kernel(c, N, M, 0.0, 0.01), Q0)[5];
    CHECK(std::abs(ms.mean - ref) <= 4.0 * ms.se);
  }

  std::vector<double> bad = Q0;
  bad[0] = -1.0;
  const auto c = compute_constants(PotentialSpec::gaussian(), {1.0});
  FreshNoise noise(substream(3, 0, 0), M, 1e-4);
  CHECK_THROWS_AS(she_run(bad, c, N, noise, 1), Error);
}

TEST_CASE("stochastic kernels") {
  const int N = 8, M = 64;
  SimConfig cfg;
  cfg.N = N;
  cfg.M = M;
  const Mollifier moll(N, 0.1);

  SUBCASE("zero coupling gives the heat kernel column") {
    const Model m = make_model(PotentialSpec::gaussian(), {0.0});
    Rng rng = substream(4, 0, 0);
    FieldState s = init_equilibrium(tilt_for_mean(m.spec, 0.0), cfg, rng);
    const auto drv = record_driver(s, m, cfg, 200, rng, moll);
    const auto col = stoch_kernel(drv, m, StochKernelConfig{}, 0, 200, 3);
    const auto ref = heat_kernel(m.c, N, M, 0.0, col.t - col.s).column(3);
    for (int i = 0; i < M; ++i) CHECK(std::abs(col.values[i] - ref[i]) <= 1e-10);
  }

  SUBCASE("columns from the same source time compose") {
    const Model m = make_model(PotentialSpec::gaussian(), {1.0});
    Rng rng = substream(5, 0, 0);
    FieldState s = init_equilibrium(tilt_for_mean(m.spec, 0.0), cfg, rng);
    const auto drv = record_driver(s, m, cfg, 64, rng, moll);
    CHECK(drv.steps() == 64);
    const auto col0 = stoch_kernel(drv, m, StochKernelConfig{}, 10, 10, 3);
    for (int i = 0; i < M; ++i) CHECK(col0.values[i] == (i == 3 ? 1.0 : 0.0));
    const std::vector<int> ys{0, 5};
    const double res = chapman_kolmogorov_residual(drv, m, StochKernelConfig{}, 0, 64, 33, 2, ys);
    CHECK(std::isfinite(res));
    CHECK(res >= 0.0);
  }

  std::vector<double> col(16, 0.0);
  col[2] = 1.0;
  CHECK(weighted_norm(col, 2, 1.0, 8) == 1.0);
  col[4] = 1.0;
  CHECK(weighted_norm(col, 2, 1.0, 8) == Approx(1.0 + std::exp(0.25)));
}
