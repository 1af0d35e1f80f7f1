#include <cmath>

#include "doctest.h"

#include "glkpz/cole_hopf.hpp"
#include "glkpz/errors.hpp"
#include "glkpz/local_fn.hpp"
#include "glkpz/potential.hpp"
#include "glkpz/stats.hpp"

using namespace glkpz;
using doctest::Approx;

namespace {
const double kLogSqrt2Pi = 0.5 * std::log(2.0 * M_PI);
}

TEST_CASE("eval_potential on the two families") {
  const auto g = PotentialSpec::gaussian();
  auto v = eval_potential(g, 2.0);
  CHECK(v.u == Approx(2.0));
  CHECK(v.du == Approx(2.0));
  CHECK(v.d2u == Approx(1.0));
  v = eval_potential(g, 0.0);
  CHECK(v.u == 0.0);
  CHECK(v.du == 0.0);
  CHECK(v.d2u == 1.0);
  // a^2/2 + 0.2 cos a
  const auto p = PotentialSpec::perturbed(0.2);
  v = eval_potential(p, 0.0);
  CHECK(v.u == Approx(0.2).epsilon(1e-14));
  CHECK(v.du == Approx(0.0).epsilon(1e-14));
  CHECK(v.d2u == Approx(0.8).epsilon(1e-14));
  v = eval_potential(p, 1.3);
  CHECK(v.u == Approx(0.5 * 1.69 + 0.2 * std::cos(1.3)).epsilon(1e-14));
  CHECK(v.du == Approx(1.3 - 0.2 * std::sin(1.3)).epsilon(1e-14));
}

TEST_CASE("potential spec validation") {
  CHECK_THROWS_AS(PotentialSpec::perturbed(0.9), Error);
  PotentialSpec bad = PotentialSpec::gaussian();
  bad.curvature = -1.0;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("partition function oracles") {
  const auto g = PotentialSpec::gaussian();
  CHECK(partition_function(g, 0.0) == Approx(kLogSqrt2Pi).epsilon(1e-12));
  CHECK(partition_function(g, 1.0) == Approx(kLogSqrt2Pi + 0.5).epsilon(1e-12));
  // independent trapezoid rule on [-12, 12]
  const auto p = PotentialSpec::perturbed(0.2);
  const int n = 200000;
  const double h = 24.0 / n;
  double s = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double a = -12.0 + i * h;
    s += (i == 0 || i == n ? 0.5 : 1.0) * std::exp(-p.u(a));
  }
  CHECK(std::abs(partition_function(p, 0.0) - std::log(s * h)) <= 1e-10);
}

TEST_CASE("tilt_for_mean") {
  const auto g = PotentialSpec::gaussian();
  CHECK(tilt_for_mean(g, 0.7).upsilon == Approx(0.7).epsilon(1e-10));
  CHECK(std::abs(tilt_for_mean(g, 0.0).upsilon) <= 1e-14);
  const auto p = PotentialSpec::perturbed(0.2);
  CHECK(std::abs(tilt_for_mean(p, 0.0).upsilon) <= 1e-14);
  const Ensemble e = tilt_for_mean(p, 0.3);
  const double mean = e.expect([](double a) { return a; });
  CHECK(std::abs(mean - 0.3) <= 1e-10);
  CHECK(std::abs(e.expect_rule([](double a) { return a; }) - 0.3) <= 1e-10);
}

TEST_CASE("ensemble_moment oracles at sigma = 0") {
  const auto g = PotentialSpec::gaussian();
  const Ensemble e = tilt_for_mean(g, 0.0);
  CHECK(std::abs(ensemble_moment(e, make_local_fn("U'", Poly::du(0), 0, g))) <= 1e-12);
  CHECK(std::abs(ensemble_moment(e, make_local_fn("phi^2-1", Poly::phi(0, 2) - Poly::constant(1.0), 0, g))) <= 1e-12);
  CHECK(ensemble_moment(e, make_local_fn("U'phi^3", Poly::du(0) * Poly::phi(0, 3), -1, g)) == Approx(3.0).epsilon(1e-12));
  // product over independent sites factorizes
  const auto f = make_local_fn("p", Poly::phi(1, 2) * Poly::phi(2, 2) * Poly::phi(3, 4), -1, g);
  CHECK(ensemble_moment(e, f) == Approx(3.0).epsilon(1e-12));
}

TEST_CASE("sample_ensemble moments") {
  const auto g = PotentialSpec::gaussian();
  Rng rng = substream(11, 0, 1);
  const std::size_t n = 100000;
  const auto v = sample_ensemble(tilt_for_mean(g, 0.0), n, rng);
  const auto ms = mean_se(v);
  CHECK(std::abs(ms.mean) <= 4.0 / std::sqrt(static_cast<double>(n)));
  CHECK(std::abs(ms.var - 1.0) <= 0.05);

  const auto p = PotentialSpec::perturbed(0.2);
  const Ensemble e = tilt_for_mean(p, 0.3);
  const auto w = sample_ensemble(e, n, rng);
  CHECK(std::abs(mean_se(w).mean - 0.3) <= 4.0 * std::sqrt(e.variance() / n));
  // KS against the tabulated CDF
  const CdfTable F(e);
  const double D = ks_statistic(w, [&](double a) { return F(a); });
  CHECK(ks_pvalue(D, w.size()) > 1e-3);
}

TEST_CASE("model constants") {
  const auto c = compute_constants(PotentialSpec::gaussian(), {1.0});
  CHECK(std::abs(c.alpha - 1.0) <= 1e-8);
  CHECK(std::abs(c.lambda - 1.0) <= 1e-8);
  CHECK(std::abs(c.R_lambda - 1.0 / 12.0) <= 1e-6);
  CHECK(c.deg == 2);

  const auto p = PotentialSpec::perturbed(0.2);
  const auto cp = compute_constants(p, {0.5});
  const double var = tilt_for_mean(p, 0.0).expect([](double a) { return a * a; });
  CHECK(cp.alpha == Approx(1.0 / var).epsilon(1e-12));
  CHECK(std::abs(cp.alpha - cp.alpha_fd) <= 1e-6);
  CHECK(cp.lambda == Approx(0.5 * cp.alpha).epsilon(1e-12));
  CHECK_THROWS_AS(compute_constants(p, {}), Error);
}

TEST_CASE("jet moments of library functions") {
  const auto g = PotentialSpec::gaussian();
  const Model m = make_model(g, {1.0});
  EnsembleFamily fam(g);
  const auto Q = library_entry(m, "Q");
  CHECK(Q.jet_order == 2);
  for (const auto& j : jet_moments(fam, Q, 2)) CHECK(std::abs(j.value) <= 1e-6);
  for (const auto& j : jet_moments(fam, library_entry(m, "V'"), 1)) CHECK(std::abs(j.value) <= 1e-6);
  for (const auto& j : jet_moments(fam, library_entry(m, "G"), 1)) CHECK(std::abs(j.value) <= 1e-6);
  // phi^2 has a second derivative 2 in sigma
  const auto sq = make_local_fn("phi^2", Poly::phi(1, 2), -1, g);
  const auto js = jet_moments(fam, sq, 2);
  CHECK(js[0].value == Approx(1.0).epsilon(1e-8));
  CHECK(std::abs(js[1].value) <= 1e-6);
  CHECK(js[2].value == Approx(2.0).epsilon(1e-4));
}
