#include "glkpz/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <array>
#include <cmath>
#include <map>
#include <mutex>
#include <numeric>
#include <thread>

#include <boost/math/interpolators/cardinal_cubic_b_spline.hpp>
#include <fmt/format.h>

#include "glkpz/errors.hpp"
#include "glkpz/local_fn.hpp"
#include "glkpz/rng.hpp"
#include "glkpz/stats.hpp"

namespace glkpz {

namespace {

// purpose tags of the random streams
constexpr std::uint64_t kInit = 1, kDyn = 2, kShe = 3, kSample = 4, kTail = 5, kControl = 6;

PotentialSpec potential_for(const PotentialSpec& base, double kappa) {
  PotentialSpec p = kappa == 0.0 ? PotentialSpec::gaussian() : PotentialSpec::perturbed(kappa);
  p.curvature = base.curvature;
  p.period = base.period;
  p.validate();
  return p;
}

Report new_report(const ExperimentSpec& spec, const std::string& name) {
  Report r;
  r.experiment = name;
  r.seed = spec.seed;
  r.spec = spec_to_json(spec);
  return r;
}

SimConfig sim_config(const ExperimentSpec& spec, int N) {
  SimConfig c;
  c.N = N;
  c.M = spec.M_for(N);
  c.theta = spec.theta;
  c.seed = spec.seed;
  return c;
}

// Ring indices with centered coordinate |x| <= r
bool within(int i, int M, int r) { return i <= r || i >= M - r; }

int centered(int i, int M) { return i < M / 2 ? i : i - M; }

double sample_variance(double n, double s1, double s2) {
  if (n < 2.0) return 0.0;
  return (s2 - s1 * s1 / n) / (n - 1.0);
}

}  // namespace

bool Report::pass() const {
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
}

const Check& Report::check(const std::string& name) const {
  for (const auto& c : checks)
    if (c.name == name) return c;
  fail(ErrorKind::index, fmt::format("report '{}' has no check '{}'", experiment, name));
}

const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names{"constants",    "jet_suite",      "conservation", "invariance",
                                              "heat_kernel",  "clt_space",      "kv_time",      "psi_scaling",
                                              "she_comparison", "stoch_kernels", "wedge"};
  return names;
}

ExperimentSpec default_spec(const std::string& experiment) {
  ExperimentSpec s;
  s.experiment = experiment;
  if (experiment == "constants") {
    s.betas = {1.0};
  } else if (experiment == "jet_suite") {
    s.betas = {1.0, 0.3};
    s.kappa_grid = {0.0, 0.2};
  } else if (experiment == "conservation") {
    s.betas = {1.0, 0.3};
    s.N = {16};
    s.M = 256;
    s.replicas = 1;
  } else if (experiment == "invariance") {
    s.betas = {1.0, 0.3};
    s.N = {16};
    s.M = 128;
    s.T = 0.05;
    s.replicas = 200;
    s.horizons = {0.25, 0.5};
  } else if (experiment == "heat_kernel") {
    s.betas = {1.0};
    s.N = {64};
    s.M = 1024;
    s.kappa = 1.0;
    for (int k = 4; k <= 14; ++k) s.tau_exponents.push_back(k);
  } else if (experiment == "clt_space") {
    s.betas = {1.0};
    s.N = {512};
    s.replicas = 20000;
    s.n_grid = {8, 16, 32, 64, 128, 256};
    s.q = {"alpha phi^2-1"};
    s.frozen_weights = true;
  } else if (experiment == "kv_time") {
    s.betas = {1.0, 0.3};
    s.N = {32};
    s.M = 256;
    s.replicas = 100;
    s.q = {"Q"};
    s.t_grid = {10, 20, 40, 80, 160, 320, 640, 1000};
    s.stride = 40;
    s.positions = 4;
    s.window_factor = 4.0;
    s.frozen_weights = true;
  } else if (experiment == "psi_scaling") {
    s.betas = {1.0, 0.3};
    s.kappa_grid = {0.0, 0.2};
    s.replicas = 20000;
    s.ell_grid = {16, 32, 64, 128, 256, 512, 1024};
    s.q.clear();  // empty selects the whole library
  } else if (experiment == "she_comparison") {
    s.betas = {1.0};
    s.N = {16, 32, 64};
    s.M_factor = 8;
    s.T = 0.1;
    s.replicas = 400;
    s.stride = 4;
  } else if (experiment == "stoch_kernels") {
    s.betas = {1.0};
    s.N = {16, 32, 64};
    s.M_factor = 8;
    s.T = 0.05;
    s.replicas = 1000;
    s.norm_replicas = 20;
    s.aggregates = {8, 4, 2};
  } else if (experiment == "wedge") {
    s.betas = {1.0};
    s.N = {512};
    s.M_factor = 4;
    s.T = 0.05;
    s.replicas = 200;
  } else {
    fail(ErrorKind::config, fmt::format("unknown experiment '{}'", experiment));
  }
  return s;
}

Json spec_to_json(const ExperimentSpec& s) {
  Json j;
  j["experiment"] = s.experiment;
  j["seed"] = s.seed;
  j["threads"] = s.threads;
  j["replicas"] = s.replicas;
  j["bootstrap"] = s.bootstrap;
  j["potential"] = {{"family", s.potential.family == PotentialFamily::gaussian ? "gaussian" : "perturbed"},
                    {"kappa_pert", s.potential.kappa_pert},
                    {"curvature", s.potential.curvature},
                    {"period", s.potential.period}};
  j["kappa_grid"] = s.kappa_grid;
  j["betas"] = s.betas;
  j["sim"] = {{"N", s.N},         {"M", s.M},         {"M_factor", s.M_factor}, {"theta", s.theta},
              {"T", s.T},         {"sigma", s.sigma}, {"horizons", s.horizons}};
  j["av"] = {{"delta_S", s.delta_S},   {"q", s.q},           {"n_grid", s.n_grid},
             {"t_grid", s.t_grid},     {"frozen_weights", s.frozen_weights},
             {"stride", s.stride},     {"positions", s.positions}, {"window_factor", s.window_factor},
             {"ell_grid", s.ell_grid}};
  j["kernel"] = {{"zeta", s.zeta},         {"zeta_large", s.zeta_large},   {"kappa", s.kappa},
                 {"mode", s.kernel_mode},  {"l_max", s.l_max},             {"m_max", s.m_max},
                 {"coef", s.k_coef},       {"tau_exponents", s.tau_exponents},
                 {"aggregates", s.aggregates}, {"norm_replicas", s.norm_replicas}};
  const auto& t = s.tol;
  j["tolerance"] = {{"jet", t.jet},
                    {"ks_p", t.ks_p},
                    {"corr_se", t.corr_se},
                    {"mean_se", t.mean_se},
                    {"clt_slope", {t.clt_slope_lo, t.clt_slope_hi}},
                    {"kv_slope", {t.kv_slope_lo, t.kv_slope_hi}},
                    {"kv_saturation", t.kv_saturation},
                    {"psi_exact_se", t.psi_exact_se},
                    {"psi_bound_se", t.psi_bound_se},
                    {"she_decrease", t.she_decrease},
                    {"conservation", t.conservation},
                    {"hk_row_sum", t.hk_row_sum},
                    {"hk_semigroup", t.hk_semigroup},
                    {"hk_envelope_factor", t.hk_envelope_factor},
                    {"kernel_mean_se", t.kernel_mean_se},
                    {"kernel_norm", {t.kernel_norm_factor, t.kernel_norm_exponent}},
                    {"wedge_mass", t.wedge_mass},
                    {"wedge_tail", t.wedge_tail},
                    {"wedge_profile", t.wedge_profile}};
  return j;
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, threads)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::mutex err_mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lk(err_mu);
          if (!err) err = std::current_exception();
          next = n;
        }
      }
    });
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

// ---------------------------------------------------------------- constants

Report exp_constants(const ExperimentSpec& spec) {
  Report r = new_report(spec, "constants");
  const Model m = make_model(spec.potential, spec.betas);
  const auto& c = m.c;
  r.tables.push_back({"constants",
                      {"potential", "alpha", "alpha_fd", "beta", "lambda", "R_lambda", "deg"},
                      {{spec.potential.tag(), c.alpha, c.alpha_fd, c.beta, c.lambda, c.R_lambda, c.deg}}});
  r.checks.push_back({"alpha_matches_tilt_slope", std::abs(c.alpha - c.alpha_fd) <= 1e-6,
                      {{"alpha", c.alpha}, {"alpha_fd", c.alpha_fd}, {"tol", 1e-6}}});
  const bool gaussian_unit = spec.potential == PotentialSpec::gaussian() && spec.betas.size() >= 1 &&
                             spec.betas[0] == 1.0;
  if (gaussian_unit) {
    r.checks.push_back({"gaussian_alpha", std::abs(c.alpha - 1.0) <= 1e-8, {{"value", c.alpha}, {"tol", 1e-8}}});
    r.checks.push_back({"gaussian_lambda", std::abs(c.lambda - 1.0) <= 1e-8, {{"value", c.lambda}, {"tol", 1e-8}}});
    r.checks.push_back({"gaussian_R_lambda", std::abs(c.R_lambda - 1.0 / 12.0) <= 1e-6,
                        {{"value", c.R_lambda}, {"expected", 1.0 / 12.0}, {"tol", 1e-6}}});
  }
  return r;
}

// ---------------------------------------------------------------- jets

Report exp_jet_suite(const ExperimentSpec& spec) {
  Report r = new_report(spec, "jet_suite");
  Table t{"jets", {"potential", "q", "declared_order", "order", "value", "error", "tol", "pass"}, {}};
  bool control_failed = false;
  double control_value = 0.0;
  for (double kappa : spec.kappa_grid) {
    const PotentialSpec p = potential_for(spec.potential, kappa);
    const Model m = make_model(p, spec.betas);
    EnsembleFamily fam(p);
    bool all = true;
    double worst = 0.0;
    auto lib = local_fn_library(m);
    const bool with_control = kappa == spec.kappa_grid.front();
    if (with_control)
      lib.push_back(make_local_fn("alpha phi^2 (mis-tagged)", Poly::phi(1, 2) * m.c.alpha, 0, p));
    for (const auto& f : lib) {
      const bool control = f.name == "alpha phi^2 (mis-tagged)";
      const auto jets = jet_moments(fam, f, f.jet_order);
      bool ok = true;
      for (std::size_t k = 0; k < jets.size(); ++k) {
        const bool pk = std::abs(jets[k].value) <= spec.tol.jet;
        ok = ok && pk;
        t.rows.push_back({p.tag(), f.name, f.jet_order, static_cast<int>(k), jets[k].value, jets[k].error,
                          spec.tol.jet, pk});
        if (control && k == 0) control_value = jets[k].value;
        if (!control) worst = std::max(worst, std::abs(jets[k].value));
      }
      if (control)
        control_failed = !ok;
      else
        all = all && ok;
    }
    r.checks.push_back({"library_" + p.tag(), all, {{"max_abs_jet", worst}, {"tol", spec.tol.jet}}});
  }
  r.checks.push_back({"negative_control_fails", control_failed,
                      {{"order0_value", control_value}, {"tol", spec.tol.jet}}});
  r.tables.push_back(std::move(t));
  return r;
}

// ---------------------------------------------------------------- conservation

Report exp_conservation(const ExperimentSpec& spec) {
  Report r = new_report(spec, "conservation");
  const Model m = make_model(spec.potential, spec.betas);
  const Ensemble ens = tilt_for_mean(spec.potential, spec.sigma);
  Table t{"conservation", {"N", "M", "steps", "sum_initial", "sum_final", "relative_drift"}, {}};
  bool ok = true;
  const std::size_t steps = 10000;
  for (int N : spec.N) {
    const SimConfig cfg = sim_config(spec, N);
    cfg.validate(m);
    Rng init = substream(spec.seed, 0, kInit), dyn = substream(spec.seed, 0, kDyn);
    FieldState s = init_equilibrium(ens, cfg, init);
    const double s0 = std::accumulate(s.phi.begin(), s.phi.end(), 0.0);
    double scale = 0.0;
    for (double v : s.phi) scale += std::abs(v);
    Stepper st(m, cfg, cfg.dt(m));
    for (std::size_t k = 0; k < steps; ++k) st.step(s, dyn);
    const double s1 = std::accumulate(s.phi.begin(), s.phi.end(), 0.0);
    const double rel = std::abs(s1 - s0) / std::max(scale, 1.0);
    ok = ok && rel <= spec.tol.conservation;
    t.rows.push_back({N, cfg.M, static_cast<int>(steps), s0, s1, rel});
  }
  r.checks.push_back({"sum_phi_conserved", ok, {{"tol", spec.tol.conservation}}});
  r.tables.push_back(std::move(t));
  return r;
}

// ---------------------------------------------------------------- invariance

Report exp_invariance(const ExperimentSpec& spec) {
  Report r = new_report(spec, "invariance");
  if (spec.replicas < 30) fail(ErrorKind::config, "invariance: replicas must be at least 30");
  const Model m = make_model(spec.potential, spec.betas);
  const Ensemble ens = tilt_for_mean(spec.potential, spec.sigma);
  const CdfTable cdf(ens);
  std::vector<double> fracs = spec.horizons;
  fracs.push_back(1.0);
  std::sort(fracs.begin(), fracs.end());
  fracs.erase(std::unique(fracs.begin(), fracs.end()), fracs.end());

  Table t{"invariance",
          {"N", "M", "horizon", "ks_D", "ks_p", "mean", "mean_se", "corr_lag1", "corr_lag2", "corr_lag3", "corr_se"},
          {}};
  for (int N : spec.N) {
    const SimConfig cfg = sim_config(spec, N);
    cfg.validate(m);
    const int M = cfg.M;
    const std::size_t R = spec.replicas;
    // fields[h][rep]
    std::vector<std::vector<std::vector<double>>> fields(fracs.size(), std::vector<std::vector<double>>(R));
    parallel_for(R, spec.threads, [&](std::size_t rep) {
      Rng init = substream(spec.seed, rep, kInit), dyn = substream(spec.seed, rep, kDyn);
      FieldState s = init_equilibrium(ens, cfg, init);
      double done = 0.0;
      for (std::size_t h = 0; h < fracs.size(); ++h) {
        run(s, m, cfg, spec.T * (fracs[h] - done), dyn);
        done = fracs[h];
        fields[h][rep] = s.phi;
      }
    });
    for (std::size_t h = 0; h < fracs.size(); ++h) {
      std::vector<double> pooled;
      pooled.reserve(R * M);
      std::vector<double> rep_means(R);
      for (std::size_t rep = 0; rep < R; ++rep) {
        pooled.insert(pooled.end(), fields[h][rep].begin(), fields[h][rep].end());
        rep_means[rep] = mean_se(fields[h][rep]).mean;
      }
      const double D = ks_statistic(pooled, [&](double a) { return cdf(a); });
      const double p = ks_pvalue(D, pooled.size());
      const auto ms = mean_se(rep_means);
      double corr[3];
      for (int lag = 1; lag <= 3; ++lag) {
        std::vector<double> a, b;
        a.reserve(R * M);
        b.reserve(R * M);
        for (std::size_t rep = 0; rep < R; ++rep)
          for (int x = 0; x < M; ++x) {
            a.push_back(fields[h][rep][x]);
            b.push_back(fields[h][rep][ring(x + lag, M)]);
          }
        corr[lag - 1] = correlation(a, b);
      }
      const double cse = 1.0 / std::sqrt(static_cast<double>(R * M));
      const double horizon = spec.T * fracs[h];
      t.rows.push_back({N, M, horizon, D, p, ms.mean, ms.se, corr[0], corr[1], corr[2], cse});
      if (h + 1 == fracs.size()) {
        const std::string tag = fmt::format("N{}", N);
        r.checks.push_back({"ks_" + tag, p > spec.tol.ks_p, {{"D", D}, {"p", p}, {"threshold", spec.tol.ks_p}}});
        const double worst = std::max({std::abs(corr[0]), std::abs(corr[1]), std::abs(corr[2])});
        r.checks.push_back({"cross_site_correlation_" + tag, worst < spec.tol.corr_se * cse,
                            {{"max_abs_corr", worst}, {"se", cse}, {"n_se", spec.tol.corr_se}}});
        r.checks.push_back({"mean_" + tag, std::abs(ms.mean - ens.moments[1]) <= spec.tol.mean_se * ms.se,
                            {{"mean", ms.mean}, {"se", ms.se}, {"expected", ens.moments[1]}}});
      }
    }
  }
  r.tables.push_back(std::move(t));
  return r;
}

// ---------------------------------------------------------------- heat kernel

Report exp_heat_kernel(const ExperimentSpec& spec) {
  Report r = new_report(spec, "heat_kernel");
  const Model m = make_model(spec.potential, spec.betas);
  Table t{"heat_kernel", {"N", "M", "tau", "row_sum_residual", "semigroup_residual", "l2_weighted", "envelope"}, {}};
  for (int N : spec.N) {
    const int M = spec.M_for(N);
    double row_res = 0.0, sg_res = 0.0, lo = INFINITY, hi = 0.0;
    for (int k : spec.tau_exponents) {
      const double tau = std::ldexp(1.0, -k);
      const HeatKernel H = heat_kernel(m.c, N, M, 0.0, tau);
      const HeatKernel Hh = heat_kernel(m.c, N, M, 0.0, tau / 2);
      const auto row = H.row0();
      const double rs = std::abs(std::accumulate(row.begin(), row.end(), 0.0) - 1.0);
      // circulant semigroup identity on one row: H_tau(0, x) = sum_z H_{tau/2}(0, z) H_{tau/2}(z, x)
      const auto h = Hh.row0();
      double sg = 0.0;
      for (int x = 0; x < M; ++x) {
        double acc = 0.0;
        for (int z = 0; z < M; ++z) acc += h[z] * h[ring(x - z, M)];
        sg = std::max(sg, std::abs(acc - row[x]));
      }
      const auto probe = hk_probe(H, spec.kappa, 0, N);
      const double env = probe.l2_weighted * N * std::sqrt(tau);
      row_res = std::max(row_res, rs);
      sg_res = std::max(sg_res, sg);
      lo = std::min(lo, env);
      hi = std::max(hi, env);
      t.rows.push_back({N, M, tau, rs, sg, probe.l2_weighted, env});
    }
    const std::string tag = fmt::format("N{}", N);
    r.checks.push_back({"row_sum_" + tag, row_res <= spec.tol.hk_row_sum, {{"max", row_res}, {"tol", spec.tol.hk_row_sum}}});
    r.checks.push_back({"semigroup_" + tag, sg_res <= spec.tol.hk_semigroup, {{"max", sg_res}, {"tol", spec.tol.hk_semigroup}}});
    r.checks.push_back({"envelope_stable_" + tag, hi <= spec.tol.hk_envelope_factor * lo,
                        {{"min", lo}, {"max", hi}, {"ratio", hi / lo}, {"factor", spec.tol.hk_envelope_factor}}});
  }
  r.tables.push_back(std::move(t));
  return r;
}

// ---------------------------------------------------------------- CLT in space

namespace {

struct SlopeResult {
  LineFit fit;
  Interval ci;
};

// log-variance slope over the grid with a replica bootstrap; vals[rep][k]
SlopeResult variance_slope(const std::vector<std::vector<double>>& vals, const std::vector<double>& logx,
                           int resamples, std::uint64_t seed) {
  const std::size_t K = logx.size();
  auto stat = [&](std::span<const std::size_t> idx) {
    std::vector<double> lv(K);
    for (std::size_t k = 0; k < K; ++k) {
      double s1 = 0.0, s2 = 0.0;
      for (auto i : idx) {
        s1 += vals[i][k];
        s2 += vals[i][k] * vals[i][k];
      }
      lv[k] = std::log(sample_variance(static_cast<double>(idx.size()), s1, s2));
    }
    return ols(logx, lv).slope;
  };
  std::vector<std::size_t> all(vals.size());
  std::iota(all.begin(), all.end(), 0);
  std::vector<double> lv(K);
  for (std::size_t k = 0; k < K; ++k) {
    double s1 = 0.0, s2 = 0.0;
    for (const auto& v : vals) {
      s1 += v[k];
      s2 += v[k] * v[k];
    }
    lv[k] = std::log(sample_variance(static_cast<double>(vals.size()), s1, s2));
  }
  SlopeResult res;
  res.fit = ols(logx, lv);
  res.ci = bootstrap_ci(vals.size(), stat, resamples, seed);
  return res;
}

}  // namespace

Report exp_clt_space(const ExperimentSpec& spec) {
  Report r = new_report(spec, "clt_space");
  if (spec.n_grid.size() < 2) fail(ErrorKind::config, "clt_space: need at least two block sizes");
  const Model m = make_model(spec.potential, spec.betas);
  const Ensemble ens = tilt_for_mean(spec.potential, 0.0);
  Table t{"clt_space", {"N", "q", "n", "variance", "variance_se", "weighted_variance"}, {}};
  Table s{"clt_slope", {"N", "M", "slope", "ci_lo", "ci_hi", "pass", "q", "weights", "slope_se"}, {}};
  const int nmax = *std::max_element(spec.n_grid.begin(), spec.n_grid.end());
  for (int N : spec.N) {
    for (const auto& qname : spec.q) {
      const LocalFn q = library_entry(m, qname);
      const int Ms = nmax + q.width() + std::max(0, q.hi) + std::max(0, -q.lo) + 2;
      const std::size_t R = spec.replicas;
      const std::size_t K = spec.n_grid.size();
      std::vector<std::vector<double>> frozen(R, std::vector<double>(K)), weighted(R, std::vector<double>(K));
      std::vector<double> single(R);
      parallel_for(R, spec.threads, [&](std::size_t rep) {
        Rng rng = substream(spec.seed, rep, kSample);
        EnsembleSampler sampler(ens);
        std::vector<double> phi(Ms);
        sampler.fill(phi, rng);
        AvConfig cfg;
        for (std::size_t k = 0; k < K; ++k) {
          cfg.n_av = spec.n_grid[k];
          cfg.frozen_weights = true;
          frozen[rep][k] = av_space(q, phi, 0, cfg, m, N);
          cfg.frozen_weights = false;
          weighted[rep][k] = av_space(q, phi, 0, cfg, m, N);
        }
        cfg.n_av = 1;
        cfg.frozen_weights = true;
        single[rep] = av_space(q, phi, 0, cfg, m, N);
      });
      std::vector<double> logn;
      for (int n : spec.n_grid) logn.push_back(std::log(static_cast<double>(n)));
      for (std::size_t k = 0; k < K; ++k) {
        std::vector<double> a(R), b(R), a2(R);
        for (std::size_t i = 0; i < R; ++i) {
          a[i] = frozen[i][k];
          b[i] = weighted[i][k];
        }
        const auto ma = mean_se(a), mb = mean_se(b);
        for (std::size_t i = 0; i < R; ++i) a2[i] = (a[i] - ma.mean) * (a[i] - ma.mean);
        t.rows.push_back({N, qname, spec.n_grid[k], ma.var, mean_se(a2).se, mb.var});
      }
      const auto& main = spec.frozen_weights ? frozen : weighted;
      const auto& other = spec.frozen_weights ? weighted : frozen;
      const auto sr = variance_slope(main, logn, spec.bootstrap, spec.seed);
      const auto so = variance_slope(other, logn, spec.bootstrap, spec.seed + 1);
      const bool ok = sr.ci.inside(spec.tol.clt_slope_lo, spec.tol.clt_slope_hi);
      s.rows.push_back({N, Ms, sr.fit.slope, sr.ci.lo, sr.ci.hi, ok, qname,
                        spec.frozen_weights ? "frozen" : "cole_hopf", sr.fit.slope_se});
      s.rows.push_back({N, Ms, so.fit.slope, so.ci.lo, so.ci.hi,
                        so.ci.inside(spec.tol.clt_slope_lo, spec.tol.clt_slope_hi), qname,
                        spec.frozen_weights ? "cole_hopf" : "frozen", so.fit.slope_se});
      const std::string tag = fmt::format("N{}_{}", N, qname);
      r.checks.push_back({"slope_" + tag, ok,
                          {{"slope", sr.fit.slope},
                           {"ci", {sr.ci.lo, sr.ci.hi}},
                           {"band", {spec.tol.clt_slope_lo, spec.tol.clt_slope_hi}}}});
      // single-site variance against quadrature
      const double mu = ensemble_moment(ens, q);
      const LocalFn q2 = make_custom_fn("q^2", q.lo, q.hi, -1, spec.potential,
                                        [&q](std::span<const double> w) {
                                          const double v = q.eval(w);
                                          return v * v;
                                        },
                                        1.0, 2 * q.growth_p);
      const double exact = ensemble_moment(ens, q2) - mu * mu;
      const auto m1 = mean_se(single);
      std::vector<double> dev(R);
      for (std::size_t i = 0; i < R; ++i) dev[i] = (single[i] - m1.mean) * (single[i] - m1.mean);
      const double vse = mean_se(dev).se;
      r.checks.push_back({"single_site_variance_" + tag, std::abs(m1.var - exact) <= spec.tol.mean_se * vse,
                          {{"variance", m1.var}, {"se", vse}, {"quadrature", exact}}});
    }
  }
  r.tables.push_back(std::move(t));
  r.tables.push_back(std::move(s));
  return r;
}

// ---------------------------------------------------------------- Kipnis-Varadhan in time

Report exp_kv_time(const ExperimentSpec& spec) {
  Report r = new_report(spec, "kv_time");
  if (spec.t_grid.size() < 3) fail(ErrorKind::config, "kv_time: need at least three averaging times");
  const Model m = make_model(spec.potential, spec.betas);
  const Ensemble ens = tilt_for_mean(spec.potential, spec.sigma);
  Table t{"kv_time", {"N", "q", "t_units", "t_av", "variance", "variance_se", "ratio_to_space", "in_fit"}, {}};
  Table s{"kv_slope", {"N", "M", "slope", "ci_lo", "ci_hi", "pass", "q", "slope_se", "fit_from", "fit_to", "crossover"},
          {}};
  for (int N : spec.N) {
    const SimConfig cfg = sim_config(spec, N);
    const int M = cfg.M;
    for (const auto& qname : spec.q) {
      const LocalFn q = library_entry(m, qname);
      cfg.validate(m, q.width());
      AvConfig av = default_scales(N, spec.delta_S);
      if (!spec.n_grid.empty()) av.n_av = spec.n_grid.front();
      av.frozen_weights = spec.frozen_weights;
      const double dt = cfg.dt(m);
      const double snap_dt = dt * spec.stride;
      const std::size_t K = spec.t_grid.size();
      std::vector<int> wsnaps(K);
      for (std::size_t k = 0; k < K; ++k)
        wsnaps[k] = std::max(1, static_cast<int>(std::lround(spec.t_grid[k] / (double(N) * N) / snap_dt)));
      const int wmax = *std::max_element(wsnaps.begin(), wsnaps.end());
      const auto nsnap = static_cast<std::size_t>(std::ceil(spec.window_factor * wmax)) + 1;
      const std::size_t R = spec.replicas;
      const int P = std::max(1, spec.positions);
      // sums[rep][k] = (count, s1, s2); index K holds the single-snapshot space averages
      std::vector<std::vector<std::array<double, 3>>> sums(R, std::vector<std::array<double, 3>>(K + 1));
      parallel_for(R, spec.threads, [&](std::size_t rep) {
        Rng init = substream(spec.seed, rep, kInit), dyn = substream(spec.seed, rep, kDyn);
        FieldState st = init_equilibrium(ens, cfg, init);
        Stepper stepper(m, cfg, dt);
        std::vector<double> times(nsnap);
        std::vector<std::vector<double>> B(P, std::vector<double>(nsnap)), L(P, std::vector<double>(nsnap));
        for (std::size_t i = 0; i < nsnap; ++i) {
          if (i > 0)
            for (int k = 0; k < spec.stride; ++k) stepper.step(st, dyn);
          times[i] = st.t;
          std::vector<double> logZ;
          if (!av.frozen_weights) logZ = log_cole_hopf(st, m, N);
          for (int p = 0; p < P; ++p) {
            const int x = p * M / P;
            B[p][i] = av_space(q, st, x, av, m, N);
            L[p][i] = av.frozen_weights ? 0.0 : logZ[x];
          }
        }
        auto& acc = sums[rep];
        for (int p = 0; p < P; ++p) {
          for (std::size_t i = 0; i < nsnap; ++i) {
            acc[K][0] += 1.0;
            acc[K][1] += B[p][i];
            acc[K][2] += B[p][i] * B[p][i];
          }
          for (std::size_t k = 0; k < K; ++k) {
            const std::size_t w = wsnaps[k];
            for (std::size_t e = w; e < nsnap; e += w) {
              const std::size_t b0 = e - w;
              const std::span<const double> ts(times.data() + b0, w + 1), bs(B[p].data() + b0, w + 1),
                  ls(L[p].data() + b0, w + 1);
              const double v = av_spacetime_series(ts, bs, ls, times[e], times[e] - times[b0], av.frozen_weights);
              acc[k][0] += 1.0;
              acc[k][1] += v;
              acc[k][2] += v * v;
            }
          }
        }
      });
      auto variances = [&](std::span<const std::size_t> idx) {
        std::vector<double> v(K + 1);
        for (std::size_t k = 0; k <= K; ++k) {
          double n = 0, s1 = 0, s2 = 0;
          for (auto i : idx) {
            n += sums[i][k][0];
            s1 += sums[i][k][1];
            s2 += sums[i][k][2];
          }
          v[k] = sample_variance(n, s1, s2);
        }
        return v;
      };
      std::vector<std::size_t> all(R);
      std::iota(all.begin(), all.end(), 0);
      const auto var = variances(all);
      std::vector<double> tav(K), logt(K);
      for (std::size_t k = 0; k < K; ++k) {
        tav[k] = wsnaps[k] * snap_dt;
        logt[k] = std::log(tav[k]);
      }
      // standard errors of the variances from a replica bootstrap
      std::vector<std::vector<double>> boots;
      {
        Rng brng = substream(spec.seed, 0, 0xb0075ULL + 1);
        std::uniform_int_distribution<std::size_t> pick(0, R - 1);
        std::vector<std::size_t> idx(R);
        for (int b = 0; b < spec.bootstrap; ++b) {
          for (auto& i : idx) i = pick(brng);
          boots.push_back(variances(idx));
        }
      }
      std::vector<double> vse(K + 1);
      for (std::size_t k = 0; k <= K; ++k) {
        std::vector<double> col;
        for (const auto& b : boots) col.push_back(b[k]);
        vse[k] = std::sqrt(mean_se(col).var);
      }
      // fit window: longest run of steps whose variance drops by the saturation fraction per doubling
      std::size_t best_lo = 0, best_hi = 0, cur_lo = 0;
      for (std::size_t k = 0; k + 1 < K; ++k) {
        const double doublings = (logt[k + 1] - logt[k]) / std::log(2.0);
        const bool drop = var[k + 1] <= var[k] * std::pow(1.0 - spec.tol.kv_saturation, doublings);
        if (!drop) {
          cur_lo = k + 1;
          continue;
        }
        if (k + 1 - cur_lo > best_hi - best_lo) {
          best_lo = cur_lo;
          best_hi = k + 1;
        }
      }
      const bool enough = best_hi - best_lo >= 2;
      for (std::size_t k = 0; k < K; ++k)
        t.rows.push_back({N, qname, spec.t_grid[k], tav[k], var[k], vse[k], var[k] / var[K],
                          enough && k >= best_lo && k <= best_hi});
      t.rows.push_back({N, qname, 0.0, 0.0, var[K], vse[K], 1.0, false});
      LineFit fit;
      Interval ci{NAN, NAN};
      bool ok = false;
      if (enough) {
        auto window_slope = [&](const std::vector<double>& v) {
          std::vector<double> x, y;
          for (std::size_t k = best_lo; k <= best_hi; ++k) {
            x.push_back(logt[k]);
            y.push_back(std::log(v[k]));
          }
          return ols(x, y);
        };
        fit = window_slope(var);
        std::vector<double> slopes;
        for (const auto& b : boots) slopes.push_back(window_slope(b).slope);
        ci = {quantile(slopes, 0.025), quantile(slopes, 0.975)};
        ok = ci.inside(spec.tol.kv_slope_lo, spec.tol.kv_slope_hi);
      }
      const Json crossover = best_hi + 1 < K ? Json(spec.t_grid[best_hi + 1]) : Json(nullptr);
      s.rows.push_back({N, M, fit.slope, ci.lo, ci.hi, ok, qname, fit.slope_se, spec.t_grid[best_lo],
                        spec.t_grid[best_hi], crossover});
      r.checks.push_back({fmt::format("slope_N{}_{}", N, qname), ok,
                          {{"slope", fit.slope},
                           {"ci", {ci.lo, ci.hi}},
                           {"band", {spec.tol.kv_slope_lo, spec.tol.kv_slope_hi}},
                           {"fit_points", enough ? best_hi - best_lo + 1 : 0},
                           {"n_av", av.n_av}}});
    }
  }
  r.tables.push_back(std::move(t));
  r.tables.push_back(std::move(s));
  return r;
}

// ---------------------------------------------------------------- equivalence of ensembles

Report exp_psi_scaling(const ExperimentSpec& spec) {
  Report r = new_report(spec, "psi_scaling");
  if (spec.ell_grid.empty()) fail(ErrorKind::config, "psi_scaling: empty block-length grid");
  Table t{"psi_scaling", {"potential", "q", "jet_order", "ell", "raw_second_moment", "raw_se", "scaled", "scaled_se",
                          "bound"}, {}};
  const double cap = 2.0, h = 0.005;
  const int nodes = static_cast<int>(std::lround(2 * cap / h)) + 1;
  for (double kappa : spec.kappa_grid) {
    const PotentialSpec p = potential_for(spec.potential, kappa);
    const Model m = make_model(p, spec.betas);
    std::vector<LocalFn> qs;
    if (spec.q.empty())
      qs = local_fn_library(m);
    else
      for (const auto& n : spec.q) qs.push_back(library_entry(m, n));
    // E^sigma q on a grid of block means
    std::vector<std::vector<double>> table(qs.size(), std::vector<double>(nodes));
    parallel_for(nodes, spec.threads, [&](std::size_t i) {
      const double sigma = -cap + h * static_cast<double>(i);
      const Ensemble e = tilt_for_mean(p, sigma);
      for (std::size_t j = 0; j < qs.size(); ++j) table[j][i] = ensemble_moment(e, qs[j]);
    });
    std::vector<boost::math::interpolators::cardinal_cubic_b_spline<double>> splines;
    for (const auto& col : table) splines.emplace_back(col.begin(), col.end(), -cap, h);
    const Ensemble e0 = tilt_for_mean(p, 0.0);
    const std::size_t R = spec.replicas;
    for (int ell : spec.ell_grid) {
      std::vector<double> rho(R);
      parallel_for(R, spec.threads, [&](std::size_t rep) {
        Rng rng = substream(spec.seed + static_cast<std::uint64_t>(ell), rep, kSample);
        EnsembleSampler sampler(e0);
        double acc = 0.0;
        for (int i = 0; i < ell; ++i) acc += sampler.draw(rng);
        rho[rep] = acc / ell;
      });
      for (double v : rho)
        if (std::abs(v) > cap) fail(ErrorKind::range, "psi_scaling: block mean outside the tabulated range");
      for (std::size_t j = 0; j < qs.size(); ++j) {
        std::vector<double> sq(R);
        for (std::size_t i = 0; i < R; ++i) {
          const double g = splines[j](rho[i]);
          sq[i] = g * g;
        }
        const auto ms = mean_se(sq);
        // admissible scaling N^{-1 + k/2} with N = ell
        const double scale = std::pow(static_cast<double>(ell), 2.0 * (-1.0 + 0.5 * qs[j].jet_order));
        t.rows.push_back({p.tag(), qs[j].name, qs[j].jet_order, ell, ms.mean, ms.se, ms.mean * scale, ms.se * scale,
                          nullptr});
      }
    }
  }
  // bound check: raw second moment <= C ell^{-3/2}, C fit at the smallest ell
  const int ell0 = *std::min_element(spec.ell_grid.begin(), spec.ell_grid.end());
  std::map<std::pair<std::string, std::string>, double> C;
  for (const auto& row : t.rows)
    if (row[3].get<int>() == ell0)
      C[{row[0].get<std::string>(), row[1].get<std::string>()}] = row[4].get<double>() * std::pow(ell0, 1.5);
  // moments below kZero are quadrature roundoff of an identically vanishing E^sigma q
  constexpr double kZero = 1e-20;
  std::map<std::string, Json> violations;
  for (auto& row : t.rows) {
    const auto key = std::make_pair(row[0].get<std::string>(), row[1].get<std::string>());
    const double bound = C[key] * std::pow(row[3].get<int>(), -1.5);
    row[8] = bound;
    const double raw = row[4].get<double>();
    const bool ok = raw <= kZero || raw - spec.tol.psi_bound_se * row[5].get<double>() <= bound;
    auto& v = violations.try_emplace(key.first, Json::array()).first->second;
    if (!ok) v.push_back({{"q", key.second}, {"ell", row[3]}, {"value", raw}, {"bound", bound}});
  }
  for (const auto& [pot, v] : violations)
    r.checks.push_back({"bound_" + pot, v.empty(), {{"se", spec.tol.psi_bound_se}, {"violations", v}}});
  // exact oracles for the gaussian potential
  const std::string g = PotentialSpec::gaussian().tag();
  bool have_sq = false, sq_ok = true, have_Q = false;
  double q_max = 0.0;
  Json sq_rows = Json::array();
  for (const auto& row : t.rows) {
    if (row[0].get<std::string>() != g) continue;
    if (row[1].get<std::string>() == "alpha phi^2-1") {
      have_sq = true;
      const double ell = row[3].get<int>();
      const double exact = 3.0 / (ell * ell);
      const bool ok = std::abs(row[4].get<double>() - exact) <= spec.tol.psi_exact_se * row[5].get<double>();
      sq_ok = sq_ok && ok;
      sq_rows.push_back({{"ell", ell}, {"value", row[4]}, {"se", row[5]}, {"exact", exact}});
    }
    if (row[1].get<std::string>() == "Q") {
      have_Q = true;
      q_max = std::max(q_max, row[4].get<double>());
    }
  }
  if (have_sq) r.checks.push_back({"gaussian_square_exact", sq_ok, {{"rows", sq_rows}, {"n_se", spec.tol.psi_exact_se}}});
  if (have_Q) r.checks.push_back({"gaussian_Q_vanishes", q_max <= 1e-20, {{"max", q_max}}});
  r.tables.push_back(std::move(t));
  return r;
}

// ---------------------------------------------------------------- SHE comparison

namespace {

bool decreasing_enough(const std::vector<double>& med, double frac) {
  for (std::size_t i = 1; i < med.size(); ++i)
    if (!(med[i] < med[i - 1])) return false;
  return med.size() >= 2 && med.back() <= (1.0 - frac) * med.front();
}

}  // namespace

Report exp_she_comparison(const ExperimentSpec& spec) {
  Report r = new_report(spec, "she_comparison");
  const Model m = make_model(spec.potential, spec.betas);
  const Ensemble ens = tilt_for_mean(spec.potential, spec.sigma);
  Table t{"she_comparison", {"N", "M", "replicas", "median", "q25", "q75", "control_median"}, {}};
  std::vector<double> med, cmed;
  for (int N : spec.N) {
    const SimConfig cfg = sim_config(spec, N);
    cfg.validate(m);
    const int M = cfg.M;
    if (M < 2 * N + 1) fail(ErrorKind::config, "she_comparison: ring too small for |x| <= N");
    const std::size_t R = spec.replicas;
    std::vector<double> disc(R), ctrl(R);
    parallel_for(R, spec.threads, [&](std::size_t rep) {
      Rng init = substream(spec.seed, rep, kInit), dyn = substream(spec.seed, rep, kDyn);
      FieldState s = init_equilibrium(ens, cfg, init);
      const auto n = static_cast<std::size_t>(std::ceil(spec.T / cfg.dt(m) - 1e-9));
      const double dt = spec.T / static_cast<double>(n);
      Stepper st(m, cfg, dt);
      SheSolver she(m.c, N, M, dt);
      FreshNoise fresh(substream(spec.seed, rep, kControl), M, dt);
      auto logZ = log_cole_hopf(s, m, N);
      std::vector<double> Q(M), Qc(M), dB(M), dBc(M);
      for (int i = 0; i < M; ++i) Q[i] = Qc[i] = std::exp(logZ[i]);
      double sup = 0.0, supc = 0.0;
      auto measure = [&] {
        logZ = log_cole_hopf(s, m, N);
        for (int i = 0; i < M; ++i) {
          if (!within(i, M, N)) continue;
          const double Z = std::exp(logZ[i]);
          sup = std::max(sup, std::abs(Z - Q[i]));
          supc = std::max(supc, std::abs(Z - Qc[i]));
        }
      };
      for (std::size_t k = 1; k <= n; ++k) {
        st.step(s, dyn, dB);
        she.step(Q, dB);
        fresh.next(dBc);
        she.step(Qc, dBc);
        if (k % static_cast<std::size_t>(std::max(1, spec.stride)) == 0 || k == n) measure();
      }
      disc[rep] = sup;
      ctrl[rep] = supc;
    });
    med.push_back(median(disc));
    cmed.push_back(median(ctrl));
    t.rows.push_back({N, M, static_cast<int>(R), med.back(), quantile(disc, 0.25), quantile(disc, 0.75), cmed.back()});
  }
  const bool ok = decreasing_enough(med, spec.tol.she_decrease);
  const bool control_pass = decreasing_enough(cmed, spec.tol.she_decrease);
  r.checks.push_back({"coupled_medians_decrease", ok, {{"medians", med}, {"min_decrease", spec.tol.she_decrease}}});
  r.checks.push_back({"fresh_noise_control_fails", !control_pass, {{"medians", cmed}}});
  r.tables.push_back(std::move(t));
  return r;
}

// ---------------------------------------------------------------- stochastic kernels

namespace {

StochKernelConfig kernel_config(const ExperimentSpec& spec) {
  StochKernelConfig k;
  k.zeta = spec.zeta;
  k.zeta_large = spec.zeta_large;
  k.kappa = spec.kappa;
  k.delta_S = spec.delta_S;
  if (spec.kernel_mode == "B")
    k.mode = KernelMode::B;
  else if (spec.kernel_mode == "K")
    k.mode = KernelMode::K;
  else
    fail(ErrorKind::config, fmt::format("kernel.mode must be B or K, got '{}'", spec.kernel_mode));
  if (!spec.q.empty()) k.q_names = spec.q;
  k.l_max = spec.l_max;
  k.m_max = spec.m_max;
  k.coef = spec.k_coef;
  return k;
}

}  // namespace

Report exp_stoch_kernels(const ExperimentSpec& spec) {
  Report r = new_report(spec, "stoch_kernels");
  const Model m = make_model(spec.potential, spec.betas);
  const Ensemble ens = tilt_for_mean(spec.potential, spec.sigma);
  StochKernelConfig kc = kernel_config(spec);
  const int N0 = spec.N.front();
  const SimConfig cfg0 = sim_config(spec, N0);
  cfg0.validate(m);
  const int M0 = cfg0.M;
  const Mollifier moll0(N0, spec.delta_S);
  const auto steps = static_cast<std::size_t>(std::ceil(spec.T / cfg0.dt(m) - 1e-9));

  // (a) mean of the B column against the heat kernel
  {
    StochKernelConfig kb = kc;
    kb.mode = KernelMode::B;
    const std::size_t R = spec.replicas;
    std::vector<std::vector<double>> cols(R);
    double s_time = 0.0, t_time = 0.0;
    parallel_for(R, spec.threads, [&](std::size_t rep) {
      Rng init = substream(spec.seed, rep, kInit), dyn = substream(spec.seed, rep, kDyn);
      FieldState s = init_equilibrium(ens, cfg0, init);
      const auto drv = record_driver(s, m, cfg0, steps, dyn, moll0);
      auto col = stoch_kernel(drv, m, kb, 0, steps, 0);
      if (rep == 0) {
        s_time = col.s;
        t_time = col.t;
      }
      cols[rep] = std::move(col.values);
    });
    const HeatKernel H = heat_kernel(m.c, N0, M0, s_time, t_time);
    const auto Hc = H.column(0);
    const double hmax = *std::max_element(Hc.begin(), Hc.end());
    double worst = 0.0;
    Table t{"kernel_mean", {"N", "x", "mean", "se", "heat_kernel", "z"}, {}};
    for (int x = 0; x < M0; ++x) {
      std::vector<double> v(R);
      for (std::size_t i = 0; i < R; ++i) v[i] = cols[i][x];
      const auto ms = mean_se(v);
      const double z = std::abs(ms.mean - Hc[x]) / (ms.se + 1e-12 * hmax);
      worst = std::max(worst, z);
      t.rows.push_back({N0, centered(x, M0), ms.mean, ms.se, Hc[x], z});
    }
    r.checks.push_back({"mean_matches_heat_kernel", worst <= spec.tol.kernel_mean_se,
                        {{"max_z", worst}, {"n_se", spec.tol.kernel_mean_se}, {"t_minus_s", t_time - s_time}}});
    r.tables.push_back(std::move(t));
  }

  // (b) Chapman-Kolmogorov residual as the kernel step shrinks
  {
    const std::size_t R = std::max(1, spec.norm_replicas);
    const std::size_t A = spec.aggregates.size();
    std::vector<std::vector<double>> res(R, std::vector<double>(A));
    const std::vector<int> ys{0, M0 / 4};
    parallel_for(R, spec.threads, [&](std::size_t rep) {
      Rng init = substream(spec.seed + 1, rep, kInit), dyn = substream(spec.seed + 1, rep, kDyn);
      FieldState s = init_equilibrium(ens, cfg0, init);
      const auto drv = record_driver(s, m, cfg0, steps, dyn, moll0);
      for (std::size_t a = 0; a < A; ++a) {
        const int hh = spec.aggregates[a];
        const std::size_t rs = static_cast<std::size_t>(hh) * ((steps / 2) / hh) + hh / 2;
        res[rep][a] = chapman_kolmogorov_residual(drv, m, kc, 0, steps, rs, hh, ys);
      }
    });
    Table t{"chapman_kolmogorov", {"N", "aggregate", "dt", "mean_residual", "se"}, {}};
    std::vector<double> means;
    for (std::size_t a = 0; a < A; ++a) {
      std::vector<double> v(R);
      for (std::size_t i = 0; i < R; ++i) v[i] = res[i][a];
      const auto ms = mean_se(v);
      means.push_back(ms.mean);
      t.rows.push_back({N0, spec.aggregates[a], cfg0.dt(m) * spec.aggregates[a], ms.mean, ms.se});
    }
    bool dec = true;
    for (std::size_t a = 1; a < A; ++a) dec = dec && means[a] < means[a - 1];
    r.checks.push_back({"chapman_kolmogorov_decreases", dec, {{"mean_residuals", means}, {"aggregates", spec.aggregates}}});
    r.tables.push_back(std::move(t));
  }

  // (c) weighted norm of the B column along the run
  {
    StochKernelConfig kb = kc;
    kb.mode = KernelMode::B;
    Table t{"weighted_norm", {"N", "M", "max_sup_norm", "median_sup_norm", "bound"}, {}};
    bool ok = true;
    Json vals = Json::array();
    for (int N : spec.N) {
      if (N > 64) continue;
      const SimConfig cfg = sim_config(spec, N);
      cfg.validate(m);
      const Mollifier moll(N, spec.delta_S);
      const std::size_t R = std::max(1, spec.norm_replicas);
      std::vector<double> sup(R);
      parallel_for(R, spec.threads, [&](std::size_t rep) {
        Rng init = substream(spec.seed + 2, rep, kInit), dyn = substream(spec.seed + 2, rep, kDyn);
        FieldState s = init_equilibrium(ens, cfg, init);
        const auto n = static_cast<std::size_t>(std::ceil(spec.T / cfg.dt(m) - 1e-9));
        const double dt = spec.T / static_cast<double>(n);
        Stepper st(m, cfg, dt);
        StochKernelSolver sol(m, N, cfg.M, dt, kb);
        sol.reset_delta(0, 0.0);
        std::vector<double> dB(cfg.M);
        double worst = weighted_norm(sol.column(), 0, spec.kappa, N);
        for (std::size_t k = 0; k < n; ++k) {
          const auto logZ = log_cole_hopf(s, m, N);
          const double shift = *std::max_element(logZ.begin(), logZ.end());
          const auto f = cole_hopf_field(s, m, moll, shift);
          st.step(s, dyn, dB);
          sol.step(f.Rw, dB);
          worst = std::max(worst, weighted_norm(sol.column(), 0, spec.kappa, N));
        }
        sup[rep] = worst;
      });
      const double bound = spec.tol.kernel_norm_factor * std::pow(N, spec.tol.kernel_norm_exponent);
      const double mx = *std::max_element(sup.begin(), sup.end());
      ok = ok && mx <= bound;
      vals.push_back({{"N", N}, {"max", mx}, {"bound", bound}});
      t.rows.push_back({N, cfg.M, mx, median(sup), bound});
    }
    r.checks.push_back({"weighted_norm_bounded", ok, {{"cells", vals}}});
    r.tables.push_back(std::move(t));
  }
  return r;
}

// ---------------------------------------------------------------- narrow wedge

WedgeData wedge_initial_data(int N, int M, const Model& model, Rng& rng) {
  if (N < 32) fail(ErrorKind::domain, fmt::format("wedge_initial_data: N must be at least 32, got {}", N));
  const double logN = std::log(static_cast<double>(N));
  WedgeData w;
  w.c = std::pow(logN, 1.0 / 9.0);
  w.core_radius = static_cast<int>(std::ceil(std::pow(logN, 2.0 / 9.0) * N));
  if (M / 2 <= w.core_radius)
    fail(ErrorKind::config,
         fmt::format("wedge_initial_data: ring of {} sites cannot hold the core |x| < {}", M, w.core_radius));
  const double lam = model.c.lambda;
  const double sN = 1.0 / std::sqrt(static_cast<double>(N));
  const int Lr = w.core_radius;
  std::vector<double> logZ(M);
  for (int i = 0; i < M; ++i) logZ[i] = -w.c * std::abs(centered(i, M)) / N;
  // random-walk tails from i.i.d. equilibrium increments beyond the core
  const Ensemble e0 = tilt_for_mean(model.spec, 0.0);
  EnsembleSampler sampler(e0);
  double acc = 0.0;
  for (int x = Lr + 1; x < M / 2; ++x) {
    acc += lam * sN * sampler.draw(rng);
    logZ[x] += acc;
  }
  acc = 0.0;
  for (int x = -Lr - 1; x >= -M / 2; --x) {
    acc -= lam * sN * sampler.draw(rng);
    logZ[ring(x, M)] += acc;
  }
  w.Z0.resize(M);
  w.Z0_core.assign(M, 0.0);
  for (int i = 0; i < M; ++i) {
    w.Z0[i] = std::exp(logZ[i]);
    if (std::abs(centered(i, M)) < Lr) w.Z0_core[i] = w.Z0[i];
  }
  // core normalization from the finite geometric series sum_{|x| < L} q^{|x|}
  const double q = std::exp(-w.c / N);
  const double geo = 1.0 + 2.0 * q * (1.0 - std::pow(q, Lr - 1)) / (1.0 - q);
  w.T_N = N / geo;
  // phi_x = N^{1/2} (j_x - j_{x-1}) with lambda j = log Z0, so that the heights reproduce the data
  w.state.t = 0.0;
  w.state.j0 = 0.0;
  w.state.phi.resize(M);
  for (int i = 0; i < M; ++i) w.state.phi[i] = std::sqrt(static_cast<double>(N)) * (logZ[i] - logZ[ring(i - 1, M)]) / lam;
  return w;
}

Report exp_wedge(const ExperimentSpec& spec) {
  Report r = new_report(spec, "wedge");
  const Model m = make_model(spec.potential, spec.betas);
  Table t{"wedge", {"N", "M", "c", "core_radius", "T_N", "core_mass", "tail_radius", "core_tail_mass",
                    "full_tail_mass", "profile_error", "profile_error_se"}, {}};
  for (int N : spec.N) {
    const int M = spec.M_for(N);
    const std::size_t R = spec.replicas;
    const double logN = std::log(static_cast<double>(N));
    const int tail_r = static_cast<int>(std::ceil(std::pow(logN, -0.1) * N));
    const double she_dt_target = 1e-4;
    const auto steps = static_cast<std::size_t>(std::ceil(spec.T / she_dt_target - 1e-9));
    const double dt = spec.T / static_cast<double>(steps);
    const HeatKernel H = heat_kernel(m.c, N, M, 0.0, spec.T);
    std::vector<std::vector<double>> Qs(R), Hs(R);
    std::vector<double> mass(R), tail_core(R), tail_full(R);
    std::vector<WedgeData> first(1);
    parallel_for(R, spec.threads, [&](std::size_t rep) {
      Rng tails = substream(spec.seed, rep, kTail);
      WedgeData w = wedge_initial_data(N, M, m, tails);
      double ms = 0.0, tc = 0.0, tf = 0.0;
      for (int i = 0; i < M; ++i) {
        const int x = std::abs(centered(i, M));
        ms += w.T_N * w.Z0_core[i] / N;
        if (x >= tail_r) {
          tc += w.T_N * w.Z0_core[i] / N;
          tf += w.T_N * w.Z0[i] / N;
        }
      }
      mass[rep] = ms;
      tail_core[rep] = tc;
      tail_full[rep] = tf;
      std::vector<double> data(M);
      for (int i = 0; i < M; ++i) data[i] = w.T_N * w.Z0[i];
      Hs[rep] = duhamel_apply(H, data);
      FreshNoise noise(substream(spec.seed, rep, kShe), M, dt);
      const auto snaps = she_run(data, m.c, N, noise, steps, steps);
      Qs[rep] = snaps.back().Q;
      if (rep == 0) first[0] = std::move(w);
    });
    double err = 0.0, err_se = 0.0, hmax = 0.0;
    std::vector<double> mq(M), mh(M), sq(M);
    for (int i = 0; i < M; ++i) {
      std::vector<double> a(R), b(R);
      for (std::size_t k = 0; k < R; ++k) {
        a[k] = Qs[k][i];
        b[k] = Hs[k][i];
      }
      const auto ma = mean_se(a);
      mq[i] = ma.mean;
      sq[i] = ma.se;
      mh[i] = mean_se(b).mean;
      if (within(i, M, N)) hmax = std::max(hmax, mh[i]);
    }
    for (int i = 0; i < M; ++i) {
      if (!within(i, M, N)) continue;
      const double e = std::abs(mq[i] - mh[i]) / hmax;
      if (e > err) {
        err = e;
        err_se = sq[i] / hmax;
      }
    }
    const auto mm = mean_se(mass), tcm = mean_se(tail_core), tfm = mean_se(tail_full);
    const auto& w0 = first[0];
    t.rows.push_back({N, M, w0.c, w0.core_radius, w0.T_N, mm.mean, tail_r, tcm.mean, tfm.mean, err, err_se});
    const std::string tag = fmt::format("N{}", N);
    r.checks.push_back({"mass_normalization_" + tag, std::abs(mm.mean - 1.0) <= spec.tol.wedge_mass,
                        {{"mass", mm.mean}, {"tol", spec.tol.wedge_mass}}});
    r.checks.push_back({"tail_mass_" + tag, tcm.mean <= spec.tol.wedge_tail,
                        {{"core_tail_mass", tcm.mean}, {"core_tail_mass_se", tcm.se}, {"full_tail_mass", tfm.mean},
                         {"tail_radius", tail_r}, {"tol", spec.tol.wedge_tail}}});
    r.checks.push_back({"mean_profile_" + tag, err <= spec.tol.wedge_profile,
                        {{"sup_relative_error", err}, {"se", err_se}, {"tol", spec.tol.wedge_profile},
                         {"she_dt", dt}}});
    Table prof{"wedge_profile_" + tag, {"x", "mean_Q", "mean_Q_se", "heat_flow"}, {}};
    for (int x = -N; x <= N; ++x) {
      const int i = ring(x, M);
      prof.rows.push_back({x, mq[i], sq[i], mh[i]});
    }
    r.tables.push_back(std::move(prof));
  }
  r.tables.insert(r.tables.begin(), std::move(t));
  return r;
}

// ---------------------------------------------------------------- dispatch

Report run_experiment(const ExperimentSpec& spec) {
  const auto& n = spec.experiment;
  try {
    if (n == "constants") return exp_constants(spec);
    if (n == "jet_suite") return exp_jet_suite(spec);
    if (n == "conservation") return exp_conservation(spec);
    if (n == "invariance") return exp_invariance(spec);
    if (n == "heat_kernel") return exp_heat_kernel(spec);
    if (n == "clt_space") return exp_clt_space(spec);
    if (n == "kv_time") return exp_kv_time(spec);
    if (n == "psi_scaling") return exp_psi_scaling(spec);
    if (n == "she_comparison") return exp_she_comparison(spec);
    if (n == "stoch_kernels") return exp_stoch_kernels(spec);
    if (n == "wedge") return exp_wedge(spec);
  } catch (const Error& e) {
    throw Error(e.kind(), fmt::format("experiment '{}': {}", n, e.what()));
  }
  fail(ErrorKind::config, fmt::format("unknown experiment '{}'", n));
}

}  // namespace glkpz
