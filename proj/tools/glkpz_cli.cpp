#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>

#include <fmt/format.h>

#include "CLI11.hpp"

#include "glkpz/cli_io.hpp"
#include "glkpz/errors.hpp"
#include "glkpz/experiments.hpp"
#include "glkpz/kernels.hpp"
#include "glkpz/lattice.hpp"
#include "glkpz/potential.hpp"

using namespace glkpz;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::optional<int> threads;
  bool dry_run = false;
  bool force = false;
};

ExperimentSpec resolve_spec(const Globals& g, const std::string& experiment) {
  ExperimentSpec spec = g.config.empty() ? default_spec(experiment) : load_config(g.config, experiment);
  if (spec.experiment != experiment)
    fail(ErrorKind::config,
         fmt::format("config names experiment '{}' but the command runs '{}'", spec.experiment, experiment));
  if (g.seed) spec.seed = *g.seed;
  if (g.threads) spec.threads = *g.threads;
  validate_spec(spec);
  return spec;
}

void write_manifest(RunManifest& m, const Globals& g) {
  m.finished = utc_now();
  const auto path = std::filesystem::path(g.out) / "manifest.json";
  m.outputs.push_back(path.string());
  write_atomic(path, manifest_to_json(m).dump(2) + "\n", g.force);
  std::cout << "manifest: " << path.string() << "\n";
}

int run_named(const Globals& g, const std::string& experiment) {
  const ExperimentSpec spec = resolve_spec(g, experiment);
  RunManifest m = make_manifest(spec);
  if (g.dry_run) {
    write_manifest(m, g);
    return 0;
  }
  const Report r = run_experiment(spec);
  const auto files = write_report(r, g.out, g.force);
  m.outputs.insert(m.outputs.end(), files.begin(), files.end());
  write_manifest(m, g);
  for (const auto& c : r.checks) std::cout << (c.pass ? "PASS " : "FAIL ") << c.name << " " << c.values.dump() << "\n";
  std::cout << (r.pass() ? "PASS" : "FAIL") << " " << r.experiment << "\n";
  return r.pass() ? 0 : 2;
}

int run_sample(const Globals& g, double sigma, std::size_t n) {
  ExperimentSpec spec = resolve_spec(g, "constants");
  spec.sigma = sigma;
  validate_spec(spec);
  RunManifest m = make_manifest(spec);
  if (!g.dry_run) {
    const Ensemble ens = tilt_for_mean(spec.potential, sigma);
    Rng rng = substream(spec.seed, 0, 4);
    const auto v = sample_ensemble(ens, n, rng);
    Table t{"samples", {"index", "phi"}, {}};
    for (std::size_t i = 0; i < v.size(); ++i) t.rows.push_back({static_cast<int>(i), v[i]});
    const auto path = std::filesystem::path(g.out) / "samples.csv";
    write_atomic(path, table_to_csv(t), g.force);
    m.outputs.push_back(path.string());
    std::cout << fmt::format("sigma={} upsilon={} mean={} variance={}\n", sigma, ens.upsilon, ens.moments[1],
                             ens.variance());
  }
  write_manifest(m, g);
  return 0;
}

int run_simulate(const Globals& g, std::uint64_t stride) {
  const ExperimentSpec spec = resolve_spec(g, "invariance");
  RunManifest m = make_manifest(spec);
  if (!g.dry_run) {
    const Model model = make_model(spec.potential, spec.betas);
    const Ensemble ens = tilt_for_mean(spec.potential, spec.sigma);
    const int N = spec.N.front();
    SimConfig cfg;
    cfg.N = N;
    cfg.M = spec.M_for(N);
    cfg.theta = spec.theta;
    cfg.seed = spec.seed;
    cfg.validate(model);
    Rng init = substream(spec.seed, 0, 1), dyn = substream(spec.seed, 0, 2);
    FieldState s = init_equilibrium(ens, cfg, init);
    const auto path = std::filesystem::path(g.out) / "trajectory.bin";
    TrajectoryWriter w(path, N, cfg.M, stride, g.force);
    const auto res = run(s, model, cfg, spec.T, dyn, {Observer{stride, [&](const FieldState& st, auto) {
                                                                    w.write(st);
                                                                  }}});
    w.close();
    m.outputs.push_back(path.string());
    std::cout << fmt::format("steps={} dt={} records={}\n", res.steps, res.dt, w.records());
  }
  write_manifest(m, g);
  return 0;
}

int run_kernel_probe(const Globals& g, bool stochastic) {
  if (stochastic) return run_named(g, "stoch_kernels");
  const ExperimentSpec spec = resolve_spec(g, "heat_kernel");
  RunManifest m = make_manifest(spec);
  if (g.dry_run) {
    write_manifest(m, g);
    return 0;
  }
  const Report r = run_experiment(spec);
  auto files = write_report(r, g.out, g.force);
  const Model model = make_model(spec.potential, spec.betas);
  Table cols{"kernel_columns", {"s", "t", "x", "y", "value"}, {}};
  for (int N : spec.N) {
    const int M = spec.M_for(N);
    for (int k : spec.tau_exponents) {
      const double tau = std::ldexp(1.0, -k);
      const auto col = heat_kernel(model.c, N, M, 0.0, tau).column(0);
      for (int x = 0; x < M; ++x) cols.rows.push_back({0.0, tau, x < M / 2 ? x : x - M, 0, col[x]});
    }
  }
  const auto path = std::filesystem::path(g.out) / "kernel_columns.csv";
  write_atomic(path, table_to_csv(cols), g.force);
  files.push_back(path.string());
  m.outputs.insert(m.outputs.end(), files.begin(), files.end());
  write_manifest(m, g);
  for (const auto& c : r.checks) std::cout << (c.pass ? "PASS " : "FAIL ") << c.name << "\n";
  return r.pass() ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lattice Ginzburg-Landau / Cole-Hopf experiment driver"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "key = value configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "override the seed");
  app.add_option("--out", g.out, "output directory");
  app.add_option("--threads", g.threads, "worker threads");
  app.add_flag("--dry-run", g.dry_run, "write the manifest only");
  app.add_flag("--force", g.force, "overwrite existing outputs");

  const std::vector<std::pair<std::string, std::string>> named{
      {"constants", "constants"},       {"jet-suite", "jet_suite"},     {"invariance", "invariance"},
      {"clt-space", "clt_space"},       {"kv-time", "kv_time"},         {"psi-scaling", "psi_scaling"},
      {"compare-she", "she_comparison"}, {"wedge", "wedge"},            {"conservation", "conservation"}};
  std::string chosen;
  for (const auto& [cmd, exp] : named) {
    auto* sc = app.add_subcommand(cmd, "run the " + exp + " experiment");
    sc->callback([&, exp = exp] { chosen = exp; });
  }
  double sigma = 0.0;
  std::size_t count = 1000;
  auto* sample = app.add_subcommand("sample", "draw one-site samples from the tilted ensemble");
  sample->add_option("--sigma", sigma, "mean of the ensemble");
  sample->add_option("--count", count, "number of samples");
  std::uint64_t stride = 1;
  auto* simulate = app.add_subcommand("simulate", "integrate the lattice and write a binary trajectory");
  simulate->add_option("--stride", stride, "steps between stored records")->check(CLI::PositiveNumber);
  bool stochastic = false;
  auto* probe = app.add_subcommand("kernel-probe", "heat-kernel probes and stochastic-kernel checks");
  probe->add_flag("--stochastic", stochastic, "run the stochastic kernel checks");
  auto* runc = app.add_subcommand("run", "run the experiment named in the configuration");

  CLI11_PARSE(app, argc, argv);
  try {
    if (sample->parsed()) return run_sample(g, sigma, count);
    if (simulate->parsed()) return run_simulate(g, stride);
    if (probe->parsed()) return run_kernel_probe(g, stochastic);
    if (runc->parsed()) {
      if (g.config.empty()) fail(ErrorKind::config, "run: --config is required");
      return run_named(g, load_config(g.config).experiment);
    }
    return run_named(g, chosen);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
