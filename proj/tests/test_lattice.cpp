#include <cmath>
#include <numeric>

#include "doctest.h"

#include "glkpz/errors.hpp"
#include "glkpz/lattice.hpp"
#include "glkpz/stats.hpp"

using namespace glkpz;
using doctest::Approx;

namespace {

SimConfig config(int N, int M, double theta = 0.05) {
  SimConfig c;
  c.N = N;
  c.M = M;
  c.theta = theta;
  return c;
}

}  // namespace

TEST_CASE("SimConfig validation") {
  const Model m = make_model(PotentialSpec::gaussian(), {1.0});
  CHECK_NOTHROW(config(16, 128).validate(m));
  CHECK_THROWS_AS(config(16, 128, 0.5).validate(m), Error);
  CHECK_THROWS_AS(config(16, 127).validate(m), Error);
  CHECK(config(16, 128).c_N(m.c) == Approx(256.0 + 8.0));
  CHECK(config(16, 128).dt(m) == Approx(0.05 / (4.0 * 264.0)));
}

TEST_CASE("init_equilibrium marginals") {
  const Ensemble e0 = tilt_for_mean(PotentialSpec::gaussian(), 0.0);
  const SimConfig cfg = config(16, 128);
  std::vector<double> site0;
  for (int r = 0; r < 10000; ++r) {
    Rng rng = substream(5, r, 1);
    site0.push_back(init_equilibrium(e0, cfg, rng).phi[0]);
  }
  const double D = ks_statistic(site0, [](double a) { return 0.5 * std::erfc(-a / std::sqrt(2.0)); });
  CHECK(ks_pvalue(D, site0.size()) > 1e-3);

  const Ensemble e3 = tilt_for_mean(PotentialSpec::gaussian(), 0.3);
  std::vector<double> means;
  for (int r = 0; r < 200; ++r) {
    Rng rng = substream(6, r, 1);
    means.push_back(mean_se(init_equilibrium(e3, cfg, rng).phi).mean);
  }
  const auto ms = mean_se(means);
  CHECK(std::abs(ms.mean - 0.3) <= 4.0 * ms.se);
}

TEST_CASE("height field reconstruction") {
  FieldState s;
  s.phi.assign(8, 0.0);
  s.j0 = 0.7;
  for (double j : height_field(s, 4)) CHECK(j == 0.7);
  s.phi[1] = 2.0;  // N^{1/2} with N = 4
  const auto j = height_field(s, 4);
  CHECK(j[1] - j[0] == Approx(1.0));
  Rng rng = substream(1, 0, 0);
  std::normal_distribution<double> nd;
  for (auto& v : s.phi) v = nd(rng);
  const auto h = height_field(s, 4);
  for (int x = 1; x < 8; ++x) CHECK(std::abs(2.0 * (h[x] - h[x - 1]) - s.phi[x]) <= 1e-12);
  const auto rh = ring_heights(s, 4);
  CHECK(rh[0] == s.j0);
  CHECK(rh[7] == Approx(s.j0 - 0.5 * s.phi[0]));
}

TEST_CASE("nonlinearity") {
  const Model m2 = make_model(PotentialSpec::gaussian(), {1.0});
  std::vector<double> ones(5, 1.0);
  CHECK(eval_nonlinearity(ones, m2).F == Approx(1.0));
  const Model m3 = make_model(PotentialSpec::gaussian(), {1.0, 0.3});
  std::vector<double> c(7, 0.4);
  CHECK(std::abs(eval_nonlinearity(c, m3).Ftilde) <= 1e-15);
  CHECK_THROWS_AS(eval_nonlinearity(ones, m3), Error);
  // sum of F - F[tau_{-1}] over a ring telescopes
  const int M = 16, deg = 3;
  Rng rng = substream(2, 0, 0);
  std::normal_distribution<double> nd;
  std::vector<double> phi(M);
  for (auto& v : phi) v = nd(rng);
  double total = 0.0;
  for (int x = 0; x < M; ++x) {
    std::vector<double> w(2 * deg + 1);
    for (int i = 0; i < 2 * deg + 1; ++i) w[i] = phi[ring(x + i - deg, M)];
    total += eval_nonlinearity(w, m3).Ftilde;
  }
  CHECK(std::abs(total) <= 1e-12);
}

TEST_CASE("drift arithmetic") {
  const Model ou = make_model(PotentialSpec::gaussian(), {0.0});
  const SimConfig cfg = config(2, 8);
  FieldState s;
  s.phi.assign(8, 0.0);
  s.phi[3] = 1.0;
  std::vector<double> d(8);
  drift(s, ou, cfg, d);
  CHECK(d[3] == Approx(-8.0));
  CHECK(d[2] == Approx(4.0));
  s.phi.assign(8, 0.6);
  drift(s, ou, cfg, d);
  for (double v : d) CHECK(std::abs(v) <= 1e-12);
  const Model m3 = make_model(PotentialSpec::perturbed(0.2), {1.0, 0.3});
  Rng rng = substream(3, 0, 0);
  std::normal_distribution<double> nd;
  for (auto& v : s.phi) v = nd(rng);
  drift(s, m3, config(4, 8), d);
  CHECK(std::abs(std::accumulate(d.begin(), d.end(), 0.0)) <= 1e-9);
}

TEST_CASE("stepping") {
  const Model m = make_model(PotentialSpec::gaussian(), {1.0, 0.3});
  SimConfig cfg = config(16, 64);
  cfg.noise = false;
  FieldState s;
  s.phi.assign(64, 0.25);
  Rng rng = substream(4, 0, 0);
  step(s, m, cfg, rng);
  for (double v : s.phi) CHECK(v == Approx(0.25).epsilon(1e-14));

  cfg.noise = true;
  const Ensemble e = tilt_for_mean(m.spec, 0.0);
  s = init_equilibrium(e, cfg, rng);
  const double before = std::accumulate(s.phi.begin(), s.phi.end(), 0.0);
  double scale = 0.0;
  for (double v : s.phi) scale += std::abs(v);
  step(s, m, cfg, rng);
  CHECK(std::abs(std::accumulate(s.phi.begin(), s.phi.end(), 0.0) - before) <= 1e-12 * scale);
}

TEST_CASE("OU Fourier mode autocorrelation") {
  const Model ou = make_model(PotentialSpec::gaussian(), {0.0});
  const SimConfig cfg = config(4, 8, 0.05);
  const Ensemble e = tilt_for_mean(ou.spec, 0.0);
  Rng rng = substream(7, 0, 0);
  FieldState s = init_equilibrium(e, cfg, rng);
  Stepper st(ou, cfg, cfg.dt(ou));
  const int k = 2, M = 8;
  std::vector<double> a;
  for (int n = 0; n < 200000; ++n) {
    double c = 0.0;
    for (int x = 0; x < M; ++x) c += s.phi[x] * std::cos(2.0 * M_PI * k * x / M);
    a.push_back(c);
    st.step(s, rng);
  }
  const std::vector<double> a0(a.begin(), a.end() - 1), a1(a.begin() + 1, a.end());
  const double rho = correlation(a0, a1);
  const double mu = 2.0 - 2.0 * std::cos(2.0 * M_PI * k / M);
  const double x = cfg.c_N(ou.c) * mu * st.dt();
  const double se = std::sqrt((1.0 - rho * rho) / a0.size());
  CHECK(std::abs(rho - std::exp(-x)) <= 4.0 * se + x * x);
}

TEST_CASE("run to a horizon") {
  const Model m = make_model(PotentialSpec::gaussian(), {1.0});
  const SimConfig cfg = config(16, 64);
  const Ensemble e = tilt_for_mean(m.spec, 0.0);
  Rng rng = substream(8, 0, 0);
  FieldState s = init_equilibrium(e, cfg, rng);
  const auto copy = s.phi;
  const auto r0 = run(s, m, cfg, 0.0, rng);
  CHECK(r0.steps == 0);
  CHECK(s.phi == copy);
  int calls = 0;
  NoiseRecording rec;
  const auto r = run(s, m, cfg, 0.01, rng, {Observer{5, [&](const FieldState&, std::span<const double>) { ++calls; }}},
                     &rec);
  CHECK(r.dt <= cfg.dt(m));
  CHECK(s.t == Approx(0.01));
  CHECK(calls == 1 + static_cast<int>(r.steps / 5));
  CHECK(rec.steps() == r.steps);
  // replaying the recorded increments reproduces the trajectory
  FieldState a;
  a.phi = copy;
  Stepper st(m, cfg, r.dt);
  for (std::size_t k = 0; k < rec.steps(); ++k) st.step_with(a, rec.at(k));
  for (int x = 0; x < 64; ++x) CHECK(a.phi[x] == Approx(s.phi[x]).epsilon(1e-12));
  CHECK(a.j0 == Approx(s.j0).epsilon(1e-12));
}
