#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "glkpz/potential.hpp"

namespace glkpz {

// phi_site^phi_pow * U'(phi_site)^du_pow
struct SiteFactor {
  int site = 0;
  int phi_pow = 0;
  int du_pow = 0;
};

struct Monomial {
  double coef = 1.0;
  std::vector<SiteFactor> factors;  // distinct sites, sorted
};

// Polynomial in the single-site atoms phi_w and U'(phi_w).
class Poly {
public:
  Poly() = default;
  static Poly constant(double c);
  static Poly phi(int site, int power = 1);
  static Poly du(int site, int power = 1);

  Poly operator+(const Poly& o) const;
  Poly operator-(const Poly& o) const;
  Poly operator*(const Poly& o) const;
  Poly operator*(double c) const;
  Poly shifted(int by) const;  // the function phi -> f[tau_by phi]

  const std::vector<Monomial>& terms() const { return terms_; }

private:
  std::vector<Monomial> terms_;
};

class LocalFn {
public:
  std::string name;
  int lo = 0, hi = 0;      // window {lo..hi}
  int jet_order = -1;      // declared k with jet vanishing up to order k; -1 for none
  double growth_C = 1.0;   // |f| <= C (1 + sum |phi_w|^p)
  int growth_p = 1;
  PotentialSpec spec;
  std::vector<Monomial> terms;  // empty when `custom` is set
  std::function<double(std::span<const double>)> custom;

  int width() const { return hi - lo + 1; }
  bool one_sided() const { return lo >= 1 || hi <= 0; }
  bool right_sided() const { return lo >= 1; }
  double scaling_exponent() const { return -1.0 + 0.5 * jet_order; }
  // window[i] = phi_{lo + i}
  double eval(std::span<const double> window) const;
};

LocalFn make_local_fn(std::string name, const Poly& p, int jet_order, const PotentialSpec& spec);
LocalFn make_custom_fn(std::string name, int lo, int hi, int jet_order, const PotentialSpec& spec,
                       std::function<double(std::span<const double>)> f, double growth_C, int growth_p);

inline constexpr int kMaxQuadratureWidth = 8;

// E^sigma f by tensor-product Gauss quadrature over the window. Polynomial
// functions use sum factorization of the same tensor rule.
double ensemble_moment(const Ensemble& ens, const LocalFn& f);

struct JetEstimate {
  double value = 0.0;
  double error = 0.0;
};

struct JetOptions {
  double step = 1e-3;
};

std::vector<JetEstimate> jet_moments(EnsembleFamily& family, const LocalFn& f, int max_order,
                                     const JetOptions& opt = {});

}  // namespace glkpz
