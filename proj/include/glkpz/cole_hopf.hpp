#pragma once

#include <span>
#include <vector>

#include "glkpz/lattice.hpp"
#include "glkpz/local_fn.hpp"
#include "glkpz/potential.hpp"

namespace glkpz {

// Unit-mass bump exp(-1/(1-u^2)) rescaled to length N^{1-delta_S}.
class Mollifier {
public:
  Mollifier(int N, double delta_S);
  int N() const { return N_; }
  double delta_S() const { return delta_S_; }
  int radius() const { return radius_; }
  double weight(int k) const { return (k < -radius_ || k > radius_) ? 0.0 : w_[k + radius_]; }
  const std::vector<double>& weights() const { return w_; }
  // periodic convolution on a ring of in.size() sites
  void convolve(std::span<const double> in, std::span<double> out) const;
  std::vector<double> convolve(std::span<const double> in) const;

private:
  int N_;
  double delta_S_;
  int radius_;
  std::vector<double> w_;
};

struct ColeHopfFields {
  double t = 0.0;
  std::vector<double> Z, S, R, Rw;  // Rw is the cutoff ratio
  double lambda = 0.0, R_lambda = 0.0;
  double log_shift = 0.0;           // Z and S are stored divided by exp(log_shift)
};

// Heights use the centered ring convention of ring_heights.
ColeHopfFields cole_hopf_field(const FieldState& s, const Model& model, const Mollifier& moll, double log_shift = 0.0);

// log Z_x = lambda j_x - lambda R_lambda t at every ring index
std::vector<double> log_cole_hopf(const FieldState& s, const Model& model, int N);

enum class Orientation { automatic, right, left };

struct AvConfig {
  double t_av = 0.0;
  int n_av = 1;
  Orientation orientation = Orientation::automatic;
  bool frozen_weights = false;  // replace the Cole-Hopf ratios by 1
};

AvConfig default_scales(double N, double delta_S);

// Catalogue of admissible local functions with their declared jet orders.
std::vector<LocalFn> local_fn_library(const Model& model);
// The nonlinearity F as a polynomial in U'(phi_w); include_quadratic = false gives F_{>2}.
Poly nonlinearity_poly(const Model& model, bool include_quadratic = true);
LocalFn library_entry(const Model& model, const std::string& name);

double av_space(const LocalFn& q, std::span<const double> phi, int x, const AvConfig& cfg, const Model& model, int N);
double av_space(const LocalFn& q, const FieldState& s, int x, const AvConfig& cfg, const Model& model, int N);

struct Snapshot {
  double t = 0.0;
  std::vector<double> phi;
  double j0 = 0.0;
};

// Time average over r in [0, t_av] of the space average at time t - r, weighted by
// Z_{t-r,x+j} / Z_{t,x}; trapezoid rule on the stored snapshot times (ascending).
double av_spacetime(const LocalFn& q, std::span<const Snapshot> history, double t, int x, const AvConfig& cfg,
                    const Model& model, int N);

// Same integral from per-snapshot space averages B (weighted relative to Z_{s,x})
// and log Z_{s,x}; times ascending.
double av_spacetime_series(std::span<const double> times, std::span<const double> B, std::span<const double> logZx,
                           double t, double t_av, bool frozen_weights = false);

// averaged time gradient with f extended by f_0 below 0 and f_1 above 1
double time_grad_av(std::span<const double> times, std::span<const double> f, double t, double t0);

struct TapReading {
  double phi_term = 0.0;   // N^{-delta_S} max |phi|
  double r_term = 0.0;     // N^{delta_S/3} max |R - 1|
  double av_x = 0.0;       // max |Av^X|
  double av_tx = 0.0;      // max |Av^{T,X}|
  double av_threshold = 0.0;
  bool crossed() const { return phi_term + r_term >= 1.0 || av_x >= av_threshold || av_tx >= av_threshold; }
};

TapReading tap_reading(std::span<const double> phi, std::span<const double> R, double av_x_max, double av_tx_max,
                       int N, double delta_S);

}  // namespace glkpz
