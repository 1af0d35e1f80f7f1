// Acceptance run: one PASS/FAIL line per criterion. Parameters and tolerances are
// pinned here and do not depend on the library defaults.
#include <chrono>
#include <cstdio>
#include <functional>
#include <string>

#include <fmt/format.h>

#include "glkpz/errors.hpp"
#include "glkpz/experiments.hpp"

using namespace glkpz;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(int id, const std::string& name, double budget_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, fmt::format("error: {}", e.what())};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool in_time = budget_s <= 0.0 || secs <= budget_s;
  const bool pass = o.pass && in_time;
  if (!pass) ++failures;
  const std::string budget = budget_s > 0.0 ? fmt::format(" budget={}s", budget_s) : "";
  std::printf("%s %2d %s runtime=%.2fs%s %s\n", pass ? "PASS" : "FAIL", id, name.c_str(), secs, budget.c_str(),
              o.detail.c_str());
  std::fflush(stdout);
}

std::string summary(const Report& r) {
  std::string s;
  for (const auto& c : r.checks) s += fmt::format("[{} {}: {}] ", c.pass ? "ok" : "FAILED", c.name, c.values.dump());
  return s;
}

Outcome from_report(const Report& r) { return {r.pass(), summary(r)}; }

ExperimentSpec pinned(const std::string& name) {
  ExperimentSpec s = default_spec(name);
  s.seed = 20240601;
  s.threads = 1;
  s.tol = Tolerances{};
  return s;
}

}  // namespace

int main() {
  criterion(1, "constants", 1.0, [] {
    ExperimentSpec s = pinned("constants");
    s.potential = PotentialSpec::gaussian();
    s.betas = {1.0};
    const auto c = compute_constants(s.potential, s.betas);
    const bool ok = std::abs(c.alpha - 1.0) <= 1e-8 && std::abs(c.lambda - 1.0) <= 1e-8 &&
                    std::abs(c.R_lambda - 1.0 / 12.0) <= 1e-6;
    const Report r = run_experiment(s);
    return Outcome{ok && r.pass(), fmt::format("alpha={:.17g} lambda={:.17g} R_lambda={:.17g} {}", c.alpha, c.lambda,
                                               c.R_lambda, summary(r))};
  });

  criterion(2, "jet_suite", 60.0, [] {
    ExperimentSpec s = pinned("jet_suite");
    s.kappa_grid = {0.0, 0.2};
    s.tol.jet = 1e-4;
    return from_report(run_experiment(s));
  });

  criterion(3, "conservation", 0.0, [] {
    ExperimentSpec s = pinned("conservation");
    s.N = {16};
    s.M = 256;
    s.tol.conservation = 1e-8;
    return from_report(run_experiment(s));
  });

  criterion(4, "invariance", 600.0, [] {
    ExperimentSpec s = pinned("invariance");
    s.N = {16};
    s.M = 128;
    s.T = 0.05;
    s.replicas = 200;
    s.betas = {1.0, 0.3};
    s.tol.ks_p = 0.01;
    s.tol.corr_se = 4.0;
    return from_report(run_experiment(s));
  });

  criterion(5, "heat_kernel", 0.0, [] {
    ExperimentSpec s = pinned("heat_kernel");
    s.kappa = 1.0;
    s.tol.hk_row_sum = 1e-10;
    s.tol.hk_semigroup = 1e-10;
    s.tol.hk_envelope_factor = 2.0;
    return from_report(run_experiment(s));
  });

  criterion(6, "clt_space", 1800.0, [] {
    ExperimentSpec s = pinned("clt_space");
    s.N = {512};
    s.q = {"alpha phi^2-1"};
    s.n_grid = {8, 16, 32, 64, 128, 256};
    s.replicas = 20000;
    s.tol.clt_slope_lo = -1.15;
    s.tol.clt_slope_hi = -0.85;
    return from_report(run_experiment(s));
  });

  criterion(7, "kv_time", 3600.0, [] {
    ExperimentSpec s = pinned("kv_time");
    s.N = {32};
    s.t_grid = {10, 20, 40, 80, 160, 320, 640, 1000};
    s.tol.kv_slope_lo = -1.25;
    s.tol.kv_slope_hi = -0.75;
    return from_report(run_experiment(s));
  });

  criterion(8, "psi_scaling", 0.0, [] {
    ExperimentSpec s = pinned("psi_scaling");
    s.ell_grid = {16, 32, 64, 128, 256, 512, 1024};
    s.q = {};
    s.tol.psi_exact_se = 5.0;
    s.tol.psi_bound_se = 3.0;
    return from_report(run_experiment(s));
  });

  criterion(9, "she_comparison", 0.0, [] {
    ExperimentSpec s = pinned("she_comparison");
    s.N = {16, 32, 64};
    s.replicas = 400;
    s.tol.she_decrease = 0.25;
    return from_report(run_experiment(s));
  });

  criterion(10, "stoch_kernels", 0.0, [] {
    ExperimentSpec s = pinned("stoch_kernels");
    s.N = {16, 32, 64};
    s.tol.kernel_mean_se = 4.0;
    s.tol.kernel_norm_factor = 10.0;
    s.tol.kernel_norm_exponent = 0.1;
    return from_report(run_experiment(s));
  });

  criterion(11, "wedge", 0.0, [] {
    ExperimentSpec s = pinned("wedge");
    s.N = {512};
    s.T = 0.05;
    s.replicas = 200;
    s.tol.wedge_mass = 0.05;
    s.tol.wedge_tail = 0.1;
    s.tol.wedge_profile = 0.10;
    return from_report(run_experiment(s));
  });

  std::printf("%s %d of 11 criteria failed\n", failures == 0 ? "PASS" : "FAIL", failures);
  return failures == 0 ? 0 : 1;
}
