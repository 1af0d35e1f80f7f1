#include "glkpz/local_fn.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <fmt/format.h>

#include "glkpz/errors.hpp"

namespace glkpz {

namespace {

double ipow(double x, int k) {
  double r = 1.0;
  for (int i = 0; i < k; ++i) r *= x;
  return r;
}

Monomial mul(const Monomial& a, const Monomial& b) {
  std::map<int, SiteFactor> m;
  for (const auto* src : {&a, &b}) {
    for (const auto& f : src->factors) {
      auto& g = m[f.site];
      g.site = f.site;
      g.phi_pow += f.phi_pow;
      g.du_pow += f.du_pow;
    }
  }
  Monomial r;
  r.coef = a.coef * b.coef;
  for (auto& [s, f] : m)
    if (f.phi_pow != 0 || f.du_pow != 0) r.factors.push_back(f);
  return r;
}

bool same_shape(const Monomial& a, const Monomial& b) {
  if (a.factors.size() != b.factors.size()) return false;
  for (std::size_t i = 0; i < a.factors.size(); ++i) {
    const auto &x = a.factors[i], &y = b.factors[i];
    if (x.site != y.site || x.phi_pow != y.phi_pow || x.du_pow != y.du_pow) return false;
  }
  return true;
}

std::vector<Monomial> simplify(std::vector<Monomial> v) {
  std::vector<Monomial> out;
  for (auto& m : v) {
    auto it = std::find_if(out.begin(), out.end(), [&](const Monomial& o) { return same_shape(o, m); });
    if (it == out.end()) out.push_back(m);
    else it->coef += m.coef;
  }
  std::erase_if(out, [](const Monomial& m) { return m.coef == 0.0; });
  return out;
}

}  // namespace

Poly Poly::constant(double c) {
  Poly p;
  p.terms_.push_back(Monomial{c, {}});
  return p;
}

Poly Poly::phi(int site, int power) {
  Poly p;
  p.terms_.push_back(Monomial{1.0, {SiteFactor{site, power, 0}}});
  return p;
}

Poly Poly::du(int site, int power) {
  Poly p;
  p.terms_.push_back(Monomial{1.0, {SiteFactor{site, 0, power}}});
  return p;
}

Poly Poly::operator+(const Poly& o) const {
  Poly r;
  r.terms_ = terms_;
  r.terms_.insert(r.terms_.end(), o.terms_.begin(), o.terms_.end());
  r.terms_ = simplify(std::move(r.terms_));
  return r;
}

Poly Poly::operator-(const Poly& o) const { return *this + o * -1.0; }

Poly Poly::operator*(const Poly& o) const {
  Poly r;
  for (const auto& a : terms_)
    for (const auto& b : o.terms_) r.terms_.push_back(mul(a, b));
  r.terms_ = simplify(std::move(r.terms_));
  return r;
}

Poly Poly::operator*(double c) const {
  Poly r = *this;
  for (auto& m : r.terms_) m.coef *= c;
  r.terms_ = simplify(std::move(r.terms_));
  return r;
}

Poly Poly::shifted(int by) const {
  Poly r = *this;
  for (auto& m : r.terms_)
    for (auto& f : m.factors) f.site += by;
  return r;
}

double LocalFn::eval(std::span<const double> w) const {
  if (static_cast<int>(w.size()) != width())
    fail(ErrorKind::index, fmt::format("{}: window of {} values, expected {}", name, w.size(), width()));
  if (custom) return custom(w);
  double s = 0.0;
  for (const auto& m : terms) {
    double v = m.coef;
    for (const auto& f : m.factors) {
      const double a = w[f.site - lo];
      v *= ipow(a, f.phi_pow) * ipow(spec.du(a), f.du_pow);
    }
    s += v;
  }
  return s;
}

LocalFn make_local_fn(std::string name, const Poly& p, int jet_order, const PotentialSpec& spec) {
  LocalFn f;
  f.name = std::move(name);
  f.jet_order = jet_order;
  f.spec = spec;
  f.terms = p.terms();
  int lo = 0, hi = 0;
  bool any = false;
  int pmax = 0;
  for (const auto& m : f.terms) {
    int D = 0;
    for (const auto& s : m.factors) {
      lo = any ? std::min(lo, s.site) : s.site;
      hi = any ? std::max(hi, s.site) : s.site;
      any = true;
      D += s.phi_pow + s.du_pow;
    }
    pmax = std::max(pmax, D);
  }
  f.lo = lo;
  f.hi = hi;
  // |U'(a)| <= cu (1 + |a|) and prod (1+|a_s|)^{D_s} <= 2^{p-1} n^{p-1} (1 + sum |a_s|^p)
  const double cu = std::max(1.0, spec.curvature + spec.kappa_pert * 6.283185307179586 / spec.period);
  const int n = f.width();
  double C = 0.0;
  for (const auto& m : f.terms) {
    int Q = 0;
    for (const auto& s : m.factors) Q += s.du_pow;
    C += std::abs(m.coef) * std::pow(cu, Q);
  }
  f.growth_p = std::max(pmax, 1);
  f.growth_C = std::max(C, 1e-300) * std::pow(2.0, f.growth_p - 1) * std::pow(static_cast<double>(n), f.growth_p - 1);
  return f;
}

LocalFn make_custom_fn(std::string name, int lo, int hi, int jet_order, const PotentialSpec& spec,
                       std::function<double(std::span<const double>)> fn, double growth_C, int growth_p) {
  if (hi < lo) fail(ErrorKind::index, "make_custom_fn: empty window");
  LocalFn f;
  f.name = std::move(name);
  f.lo = lo;
  f.hi = hi;
  f.jet_order = jet_order;
  f.spec = spec;
  f.custom = std::move(fn);
  f.growth_C = growth_C;
  f.growth_p = growth_p;
  return f;
}

double ensemble_moment(const Ensemble& ens, const LocalFn& f) {
  const int w = f.width();
  if (w > kMaxQuadratureWidth)
    fail(ErrorKind::unsupported,
         fmt::format("ensemble_moment: window width {} of '{}' exceeds {}; use the Monte Carlo path", w, f.name,
                     kMaxQuadratureWidth));
  if (!f.custom) {
    const auto& x = ens.rule.nodes;
    const auto& wt = ens.rule.weights;
    double s = 0.0;
    for (const auto& m : f.terms) {
      double v = m.coef;
      for (const auto& sf : m.factors) {
        double e = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) e += wt[i] * ipow(x[i], sf.phi_pow) * ipow(f.spec.du(x[i]), sf.du_pow);
        v *= e;
      }
      s += v;
    }
    return s;
  }
  // explicit tensor loop with a point budget of 2^22
  int n = std::min<int>(static_cast<int>(ens.rule.nodes.size()),
                        static_cast<int>(std::floor(std::pow(4194304.0, 1.0 / w) + 1e-9)));
  n = std::max(n, 2);
  const GaussRule r = static_cast<int>(ens.rule.nodes.size()) == n ? ens.rule : tilted_gauss_rule(ens.spec, ens.upsilon, n);
  std::vector<int> idx(w, 0);
  std::vector<double> pt(w);
  double s = 0.0;
  for (;;) {
    double wprod = 1.0;
    for (int d = 0; d < w; ++d) {
      pt[d] = r.nodes[idx[d]];
      wprod *= r.weights[idx[d]];
    }
    s += wprod * f.custom(pt);
    int d = 0;
    while (d < w && ++idx[d] == n) idx[d++] = 0;
    if (d == w) break;
  }
  return s;
}

std::vector<JetEstimate> jet_moments(EnsembleFamily& family, const LocalFn& f, int max_order, const JetOptions& opt) {
  if (max_order < 0 || max_order > 3) fail(ErrorKind::range, "jet_moments: max-order must lie in 0..3");
  const double h = opt.step;
  auto g = [&](double s) { return ensemble_moment(*family.at(s), f); };
  std::vector<JetEstimate> out;
  const double g0 = g(0.0);
  out.push_back({g0, 1e-13 * (1.0 + std::abs(g0))});
  if (max_order == 0) return out;
  const double gp1 = g(h), gm1 = g(-h), gph = g(0.5 * h), gmh = g(-0.5 * h);
  const double noise = 1e-14 * (1.0 + std::abs(g0));
  {
    const double D1 = (gp1 - gm1) / (2.0 * h), D2 = (gph - gmh) / h;
    const double R = (4.0 * D2 - D1) / 3.0;
    out.push_back({R, std::abs(R - D2) + noise / h});
  }
  if (max_order >= 2) {
    const double D1 = (gp1 - 2.0 * g0 + gm1) / (h * h), D2 = (gph - 2.0 * g0 + gmh) / (0.25 * h * h);
    const double R = (4.0 * D2 - D1) / 3.0;
    out.push_back({R, std::abs(R - D2) + 16.0 * noise / (h * h)});
  }
  if (max_order >= 3) {
    const double gp2 = g(2.0 * h), gm2 = g(-2.0 * h);
    const double D1 = (gp2 - 2.0 * gp1 + 2.0 * gm1 - gm2) / (2.0 * h * h * h);
    const double hh = 0.5 * h;
    const double D2 = (gp1 - 2.0 * gph + 2.0 * gmh - gm1) / (2.0 * hh * hh * hh);
    const double R = (4.0 * D2 - D1) / 3.0;
    out.push_back({R, std::abs(R - D2) + 64.0 * noise / (h * h * h)});
  }
  return out;
}

}  // namespace glkpz
