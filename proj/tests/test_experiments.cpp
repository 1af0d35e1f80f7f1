#include <cmath>

#include "doctest.h"

#include "glkpz/cli_io.hpp"
#include "glkpz/errors.hpp"
#include "glkpz/experiments.hpp"

using namespace glkpz;
using doctest::Approx;

TEST_CASE("wedge initial data") {
  const Model m = make_model(PotentialSpec::gaussian(), {1.0});
  const int N = 64, M = 1024;
  Rng rng = substream(1, 0, 5);
  const auto w = wedge_initial_data(N, M, m, rng);
  CHECK(w.c == Approx(std::pow(std::log(64.0), 1.0 / 9.0)));
  CHECK(w.Z0[0] == Approx(1.0).epsilon(1e-12));
  // the core is the two-sided wedge exp(-c |x| / N)
  for (int x : {1, 10, 50, w.core_radius - 1}) {
    CHECK(std::log(w.Z0[x]) == Approx(-w.c * x / N).epsilon(1e-10));
    CHECK(std::log(w.Z0[M - x]) == Approx(-w.c * x / N).epsilon(1e-10));
  }
  CHECK(w.Z0_core[w.core_radius] == 0.0);
  double mass = 0.0;
  for (double z : w.Z0_core) mass += z;
  CHECK(w.T_N * mass / N == Approx(1.0).epsilon(1e-12));
  // the lattice state reproduces the data through the heights
  const auto logZ = log_cole_hopf(w.state, m, N);
  for (int i : {0, 7, 300, M - 300, M - 1}) CHECK(logZ[i] == Approx(std::log(w.Z0[i])).epsilon(1e-9));

  Rng small = substream(1, 0, 5);
  CHECK_THROWS_AS(wedge_initial_data(64, 128, m, small), Error);
}

TEST_CASE("experiments are deterministic in the seed") {
  ExperimentSpec s = default_spec("constants");
  const auto a = report_to_json(run_experiment(s)).dump();
  const auto b = report_to_json(run_experiment(s)).dump();
  CHECK(a == b);

  s = default_spec("invariance");
  s.replicas = 40;
  s.T = 0.01;
  const auto c = report_to_json(run_experiment(s)).dump();
  const auto d = report_to_json(run_experiment(s)).dump();
  CHECK(c == d);
  s.seed = 2;
  CHECK(report_to_json(run_experiment(s)).dump() != c);
}

TEST_CASE("jet suite passes and its negative control fails") {
  const Report r = run_experiment(default_spec("jet_suite"));
  CHECK(r.pass());
  CHECK(r.check("negative_control_fails").pass);
  CHECK(r.check("library_gaussian").pass);
}

TEST_CASE("small experiments") {
  const Report c = run_experiment(default_spec("conservation"));
  CHECK(c.pass());
  ExperimentSpec h = default_spec("heat_kernel");
  h.tau_exponents = {4, 8};
  CHECK(run_experiment(h).pass());
  const Report k = run_experiment(default_spec("constants"));
  CHECK(k.check("alpha_matches_tilt_slope").pass);
  CHECK_THROWS_AS(k.check("missing"), Error);
}

TEST_CASE("thread count does not change results") {
  ExperimentSpec s = default_spec("clt_space");
  s.replicas = 500;
  s.threads = 1;
  const auto a = report_to_json(run_experiment(s)).dump();
  s.threads = 3;
  const auto b = report_to_json(run_experiment(s));
  auto sa = Json::parse(a);
  sa["spec"]["threads"] = 3;
  CHECK(sa.dump() == b.dump());
}

TEST_CASE("unknown experiments") {
  CHECK_THROWS_AS(default_spec("nope"), Error);
  CHECK(experiment_names().size() == 11);
}
