#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"

#include "glkpz/cole_hopf.hpp"
#include "glkpz/kernels.hpp"
#include "glkpz/lattice.hpp"
#include "glkpz/potential.hpp"

namespace glkpz {

using Json = nlohmann::ordered_json;

struct Tolerances {
  double jet = 1e-4;
  double ks_p = 0.01;
  double corr_se = 4.0;
  double mean_se = 4.0;
  double clt_slope_lo = -1.15, clt_slope_hi = -0.85;
  double kv_slope_lo = -1.25, kv_slope_hi = -0.75;
  double kv_saturation = 0.10;  // minimal relative decrease per step kept in the fit
  double psi_exact_se = 5.0;
  double psi_bound_se = 3.0;
  double she_decrease = 0.25;
  double conservation = 1e-8;
  double hk_row_sum = 1e-10;
  double hk_semigroup = 1e-10;
  double hk_envelope_factor = 2.0;
  double kernel_mean_se = 4.0;
  double kernel_norm_factor = 10.0;  // bound factor * N^{kernel_norm_exponent}
  double kernel_norm_exponent = 0.1;
  double wedge_mass = 0.05;
  double wedge_tail = 0.1;
  double wedge_profile = 0.10;
};

struct ExperimentSpec {
  std::string experiment = "jet_suite";
  std::uint64_t seed = 1;
  int threads = 1;
  int replicas = 200;
  int bootstrap = 400;

  PotentialSpec potential;
  std::vector<double> kappa_grid{0.0, 0.2};  // potentials swept by the jet suite and psi scaling
  std::vector<double> betas{1.0};

  std::vector<int> N{16};
  int M = 0;          // 0 selects M_factor * N
  int M_factor = 8;
  double theta = 0.05;
  double T = 0.05;
  double sigma = 0.0;
  std::vector<double> horizons;  // fractions of T reported in addition to T

  double delta_S = 0.1;
  std::vector<std::string> q{"alpha phi^2-1"};
  std::vector<int> n_grid;
  std::vector<double> t_grid;  // averaging times in units of N^{-2}
  bool frozen_weights = true;
  int stride = 40;             // lattice steps between stored snapshots
  int positions = 4;
  double window_factor = 4.0;  // trajectory length per replica in units of the largest averaging time
  std::vector<int> ell_grid;

  double zeta = 0.1;
  double zeta_large = 1.0;
  double kappa = 1.0;
  std::string kernel_mode = "B";
  int l_max = 2;
  int m_max = 2;
  double k_coef = 1.0;
  std::vector<int> tau_exponents;  // t - s = 2^{-k}
  std::vector<int> aggregates{8, 4, 2};
  int norm_replicas = 20;

  Tolerances tol;

  int M_for(int n) const { return M > 0 ? M : M_factor * n; }
};

// Spec with the defaults used for the named experiment.
ExperimentSpec default_spec(const std::string& experiment);
const std::vector<std::string>& experiment_names();

struct Table {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<Json>> rows;
};

struct Check {
  std::string name;
  bool pass = false;
  Json values;
};

struct Report {
  std::string experiment;
  std::uint64_t seed = 0;
  Json spec;
  std::vector<Table> tables;
  std::vector<Check> checks;
  Json diagnostics = Json::object();
  bool pass() const;
  const Check& check(const std::string& name) const;
};

Json spec_to_json(const ExperimentSpec& s);

// Runs fn(i) for i in [0, n) on `threads` workers; results must be written by index.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

Report exp_constants(const ExperimentSpec& spec);
Report exp_jet_suite(const ExperimentSpec& spec);
Report exp_conservation(const ExperimentSpec& spec);
Report exp_invariance(const ExperimentSpec& spec);
Report exp_heat_kernel(const ExperimentSpec& spec);
Report exp_clt_space(const ExperimentSpec& spec);
Report exp_kv_time(const ExperimentSpec& spec);
Report exp_psi_scaling(const ExperimentSpec& spec);
Report exp_she_comparison(const ExperimentSpec& spec);
Report exp_stoch_kernels(const ExperimentSpec& spec);
Report exp_wedge(const ExperimentSpec& spec);

Report run_experiment(const ExperimentSpec& spec);

struct WedgeData {
  FieldState state;
  std::vector<double> Z0;       // full data including tails
  std::vector<double> Z0_core;  // core part, zero for |x| >= core radius
  double c = 0.0;               // (log N)^{1/9}
  int core_radius = 0;          // first |x| outside the core
  double T_N = 0.0;             // normalization of the core
};

// Ring of M sites in centered coordinates (index i is x = i for i < M/2, else i - M).
WedgeData wedge_initial_data(int N, int M, const Model& model, Rng& rng);

}  // namespace glkpz
