#pragma once

#include <array>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "glkpz/rng.hpp"

namespace glkpz {

enum class PotentialFamily { gaussian, perturbed };

// U = U1 + U2 with U1 = curvature * a^2 / 2 and U2 = kappa_pert * cos(2 pi a / period).
// Both built-in families are even, so the tilt at sigma = 0 vanishes.
struct PotentialSpec {
  PotentialFamily family = PotentialFamily::gaussian;
  double curvature = 1.0;
  double kappa_pert = 0.0;
  double period = 6.283185307179586;

  static PotentialSpec gaussian();
  static PotentialSpec perturbed(double kappa_pert);

  // convexity bound: Lambda^-1 <= U1'' <= Lambda
  double Lambda() const;
  double u2_sup() const;
  bool is_even() const { return true; }
  std::string tag() const;
  void validate() const;

  double u(double a) const;
  double du(double a) const;
  double d2u(double a) const;
  double u2(double a) const;
};

bool operator==(const PotentialSpec& a, const PotentialSpec& b);

struct PotentialValues {
  double u, du, d2u;
};

PotentialValues eval_potential(const PotentialSpec& spec, double a);

// half-width of the integration window, 12 Lambda^{1/2}
double quadrature_half_width(const PotentialSpec& spec);

// log of the integral of exp(-U(a) + upsilon a) over the real line
double partition_function(const PotentialSpec& spec, double upsilon);

struct GaussRule {
  std::vector<double> nodes;
  std::vector<double> weights;  // sum to one
};

class Ensemble {
public:
  PotentialSpec spec;
  double sigma = 0.0;
  double upsilon = 0.0;
  double logZ = 0.0;
  std::array<double, 9> moments{};  // E phi^k, k = 0..8
  GaussRule rule;

  double variance() const { return moments[2] - moments[1] * moments[1]; }
  double density(double a) const;
  // adaptive Gauss-Kronrod expectation of a one-site function
  double expect(const std::function<double(double)>& f) const;
  // Gauss-rule expectation, exact for polynomials up to degree 2n-1
  double expect_rule(const std::function<double(double)>& f) const;
};

struct TiltOptions {
  double sigma_cap = 2.0;
  double tol = 1e-13;
  int max_iter = 60;
  int rule_nodes = 40;
};

Ensemble tilt_for_mean(const PotentialSpec& spec, double sigma, const TiltOptions& opt = {});

// Gauss rule for the density proportional to exp(-U(a) + upsilon a)
GaussRule tilted_gauss_rule(const PotentialSpec& spec, double upsilon, int n);

// CDF of one site under the ensemble, tabulated on a fine grid
class CdfTable {
public:
  explicit CdfTable(const Ensemble& ens, int panels = 4000);
  double operator()(double a) const;

private:
  double lo_, hi_, h_;
  std::vector<double> F_;
};

class EnsembleSampler {
public:
  explicit EnsembleSampler(const Ensemble& ens);
  double draw(Rng& rng);
  void fill(std::span<double> out, Rng& rng);
  double acceptance_rate() const;

private:
  PotentialSpec spec_;
  double mean_, sd_, u2sup_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> unif_{0.0, 1.0};
  long long proposed_ = 0, accepted_ = 0;
};

std::vector<double> sample_ensemble(const Ensemble& ens, std::size_t n, Rng& rng);

struct ModelConstants {
  double alpha = 1.0;
  double beta = 0.0;
  double lambda = 0.0;
  double R_lambda = 0.0;
  std::vector<double> betas;  // beta_2 ... beta_deg
  int deg = 2;
  double alpha_fd = 1.0;      // centered difference of upsilon_sigma at 0

  double beta_d(int d) const { return (d >= 2 && d - 2 < static_cast<int>(betas.size())) ? betas[d - 2] : 0.0; }
};

ModelConstants compute_constants(const PotentialSpec& spec, const std::vector<double>& betas);

struct Model {
  PotentialSpec spec;
  ModelConstants c;
};

Model make_model(const PotentialSpec& spec, const std::vector<double>& betas);

// Thread-safe cache of ensembles indexed by sigma.
class EnsembleFamily {
public:
  explicit EnsembleFamily(PotentialSpec spec, TiltOptions opt = {}) : spec_(spec), opt_(opt) {}
  std::shared_ptr<const Ensemble> at(double sigma);
  const PotentialSpec& spec() const { return spec_; }

private:
  PotentialSpec spec_;
  TiltOptions opt_;
  std::mutex mu_;
  std::map<double, std::shared_ptr<const Ensemble>> cache_;
};

}  // namespace glkpz
