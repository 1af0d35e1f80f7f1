#include <cmath>
#include <numeric>

#include "doctest.h"

#include "glkpz/cole_hopf.hpp"
#include "glkpz/errors.hpp"

using namespace glkpz;
using doctest::Approx;

namespace {

std::vector<double> gaussian_field(int M, std::uint64_t seed) {
  Rng rng = substream(seed, 0, 0);
  std::normal_distribution<double> nd;
  std::vector<double> v(M);
  for (auto& x : v) x = nd(rng);
  return v;
}

}  // namespace

TEST_CASE("mollifier") {
  for (int N : {4, 16, 64, 256}) {
    const Mollifier m(N, 0.1);
    const auto& w = m.weights();
    CHECK(std::abs(std::accumulate(w.begin(), w.end(), 0.0) - 1.0) <= 1e-15);
    for (int k = 0; k <= m.radius(); ++k) CHECK(m.weight(k) == m.weight(-k));
    CHECK(m.weight(m.radius() + 1) == 0.0);
  }
  const Mollifier m(16, 0.1);
  const std::vector<double> ones(64, 2.5);
  for (double v : m.convolve(ones)) CHECK(v == Approx(2.5).epsilon(1e-14));
}

TEST_CASE("Cole-Hopf fields") {
  const Model m = make_model(PotentialSpec::gaussian(), {1.0});
  const int N = 16, M = 128;
  const Mollifier moll(N, 0.1);
  FieldState s;
  s.phi.assign(M, 0.0);
  auto f = cole_hopf_field(s, m, moll);
  for (int x = 0; x < M; ++x) {
    CHECK(f.Z[x] == Approx(1.0).epsilon(1e-15));
    CHECK(f.S[x] == Approx(1.0).epsilon(1e-14));
    CHECK(f.R[x] == Approx(1.0).epsilon(1e-14));
    CHECK(f.Rw[x] == Approx(1.0).epsilon(1e-14));
  }
  // lambda j_x = x / N
  s.phi.assign(M, 1.0 / (m.c.lambda * std::sqrt(static_cast<double>(N))));
  const auto logZ = log_cole_hopf(s, m, N);
  for (int i = 0; i < M; ++i) {
    const int x = i < M / 2 ? i : i - M;
    CHECK(logZ[i] == Approx(static_cast<double>(x) / N).epsilon(1e-12));
  }
  // the renormalization shift at positive time
  s.t = 0.5;
  s.phi.assign(M, 0.0);
  f = cole_hopf_field(s, m, moll);
  CHECK(f.Z[3] == Approx(std::exp(-m.c.lambda * m.c.R_lambda * 0.5)).epsilon(1e-14));
  CHECK(f.R[3] == Approx(1.0).epsilon(1e-14));
}

TEST_CASE("local function library") {
  const Model m2 = make_model(PotentialSpec::gaussian(), {1.0});
  const auto lib = local_fn_library(m2);
  CHECK(lib.size() == 7);
  CHECK(library_entry(m2, "Q").jet_order == 2);
  CHECK(library_entry(m2, "V'").jet_order == 1);
  CHECK(library_entry(m2, "G").jet_order == 1);
  CHECK(library_entry(m2, "alpha phi^2-1").jet_order == 0);
  CHECK(library_entry(m2, "Q").right_sided());
  CHECK_THROWS_AS(library_entry(m2, "nope"), Error);
  const Model m3 = make_model(PotentialSpec::perturbed(0.2), {1.0, 0.3});
  CHECK(local_fn_library(m3).size() == 10);
  CHECK(library_entry(m3, "F>2").jet_order == 2);
  for (const auto& f : local_fn_library(m3)) CHECK(f.one_sided());
}

TEST_CASE("space averages") {
  const Model m = make_model(PotentialSpec::gaussian(), {1.0});
  const int N = 16, M = 128;
  AvConfig cfg;
  cfg.n_av = 10;
  cfg.frozen_weights = true;
  const auto x1 = make_local_fn("phi_1", Poly::phi(1), -1, m.spec);
  std::vector<double> c(M, 0.7);
  CHECK(av_space(x1, c, 5, cfg, m, N) == Approx(0.7).epsilon(1e-14));

  // weights are Z ratios Z_{x +- j} / Z_x on both sides
  const auto phi = gaussian_field(M, 9);
  FieldState s;
  s.phi = phi;
  const auto logZ = log_cole_hopf(s, m, N);
  cfg.frozen_weights = false;
  const int x = 20;
  double right = 0.0, left = 0.0;
  const auto x0 = make_local_fn("phi_0", Poly::phi(0), -1, m.spec);
  for (int j = 1; j <= cfg.n_av; ++j) {
    right += phi[x + j + 1] * std::exp(logZ[x + j] - logZ[x]);
    left += phi[x - j] * std::exp(logZ[x - j] - logZ[x]);
  }
  CHECK(av_space(x1, phi, x, cfg, m, N) == Approx(right / cfg.n_av).epsilon(1e-12));
  CHECK(av_space(x0, phi, x, cfg, m, N) == Approx(left / cfg.n_av).epsilon(1e-12));

  cfg.n_av = M;
  CHECK_THROWS_AS(av_space(x1, phi, x, cfg, m, N), Error);
  cfg.n_av = 4;
  const auto two = make_local_fn("phi_0 phi_1", Poly::phi(0) * Poly::phi(1), -1, m.spec);
  CHECK_THROWS_AS(av_space(two, phi, x, cfg, m, N), Error);
  cfg.orientation = Orientation::right;
  CHECK_NOTHROW(av_space(two, phi, x, cfg, m, N));
}

TEST_CASE("space-time averages") {
  const Model m = make_model(PotentialSpec::gaussian(), {1.0});
  const int N = 16, M = 64;
  const auto q = make_local_fn("phi_1", Poly::phi(1), -1, m.spec);
  std::vector<Snapshot> hist;
  for (int k = 0; k <= 10; ++k) hist.push_back({0.01 * k, gaussian_field(M, 100 + k), 0.1 * k});
  AvConfig cfg;
  cfg.n_av = 8;
  FieldState s;
  s.t = hist[7].t;
  s.phi = hist[7].phi;
  s.j0 = hist[7].j0;
  CHECK(av_spacetime(q, hist, hist[7].t, 3, cfg, m, N) == Approx(av_space(q, s, 3, cfg, m, N)).epsilon(1e-14));

  // constant series with frozen weights
  const std::vector<double> times{0.0, 0.1, 0.2, 0.3}, B(4, 2.0), lz{0.0, 0.3, -0.2, 0.1};
  CHECK(av_spacetime_series(times, B, lz, 0.3, 0.25, true) == Approx(2.0).epsilon(1e-14));
  // weighted: integrand 2 exp(lz - lz(t)) is piecewise linear by trapezoid construction
  const double g0 = 2.0 * std::exp(0.3 - 0.1), g1 = 2.0 * std::exp(-0.2 - 0.1), g2 = 2.0;
  CHECK(av_spacetime_series(times, B, lz, 0.3, 0.2, false) ==
        Approx((0.5 * (g0 + g1) * 0.1 + 0.5 * (g1 + g2) * 0.1) / 0.2).epsilon(1e-12));
  CHECK_THROWS_AS(av_spacetime_series(times, B, lz, 0.3, 0.5, true), Error);
  CHECK_THROWS_AS(av_spacetime_series(times, B, lz, 0.25, 0.1, true), Error);
}

TEST_CASE("averaged time gradient") {
  std::vector<double> times, f, one;
  for (int k = 0; k <= 100; ++k) {
    times.push_back(0.01 * k);
    f.push_back(0.01 * k);
    one.push_back(3.0);
  }
  CHECK(time_grad_av(times, f, 0.5, 0.2) == Approx(0.1).epsilon(1e-12));
  CHECK(std::abs(time_grad_av(times, one, 0.5, 0.2)) <= 1e-14);
  CHECK(time_grad_av(times, f, 0.5, 0.0) == 0.0);
  // f extended by f_0 below zero: f(0.1) - mean over [-0.1, 0.1] of max(s, 0)
  CHECK(time_grad_av(times, f, 0.1, 0.2) == Approx(0.1 - 0.025).epsilon(1e-12));
}

TEST_CASE("default averaging scales") {
  auto a = default_scales(64, 0.0);
  CHECK(a.t_av == Approx(1.0 / 16.0).epsilon(1e-14));
  CHECK(a.n_av == 64);
  a = default_scales(1, 0.1);
  CHECK(a.t_av == 1.0);
  CHECK(a.n_av == 1);
  CHECK(default_scales(1024, 0.1).n_av == 363);
  CHECK_THROWS_AS(default_scales(0.5, 0.1), Error);
}

TEST_CASE("a priori thresholds") {
  std::vector<double> phi(16, 0.1), R(16, 1.0);
  auto r = tap_reading(phi, R, 0.0, 0.0, 16, 0.1);
  CHECK_FALSE(r.crossed());
  phi[3] = 100.0;
  r = tap_reading(phi, R, 0.0, 0.0, 16, 0.1);
  CHECK(r.crossed());
  phi[3] = 0.1;
  r = tap_reading(phi, R, 0.0, 1.0, 16, 0.1);
  CHECK(r.crossed());
}
