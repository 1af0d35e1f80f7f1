#include "glkpz/potential.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <fmt/format.h>

#include "glkpz/errors.hpp"

namespace glkpz {

const char* error_kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::domain: return "domain";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::range: return "range";
    case ErrorKind::config: return "config";
    case ErrorKind::unsupported: return "unsupported";
    case ErrorKind::index: return "index";
    case ErrorKind::instability: return "instability";
    case ErrorKind::window: return "window";
    case ErrorKind::shape: return "shape";
    case ErrorKind::io: return "io";
    case ErrorKind::consistency: return "consistency";
  }
  return "unknown";
}

namespace {

constexpr double kTwoPi = 6.283185307179586;
using GK = boost::math::quadrature::gauss_kronrod<double, 31>;

// max of -U(a) + upsilon a on a coarse grid, used as an exponent shift
double log_peak(const PotentialSpec& spec, double upsilon) {
  const double L = quadrature_half_width(spec);
  double m = -std::numeric_limits<double>::infinity();
  for (int i = 0; i <= 480; ++i) {
    double a = -L + 2.0 * L * i / 480.0;
    m = std::max(m, -spec.u(a) + upsilon * a);
  }
  return m;
}

}  // namespace

PotentialSpec PotentialSpec::gaussian() { return PotentialSpec{}; }

PotentialSpec PotentialSpec::perturbed(double kappa_pert) {
  PotentialSpec s;
  s.family = PotentialFamily::perturbed;
  s.kappa_pert = kappa_pert;
  s.validate();
  return s;
}

double PotentialSpec::Lambda() const { return std::max(curvature, 1.0 / curvature); }

double PotentialSpec::u2_sup() const {
  return family == PotentialFamily::perturbed ? std::abs(kappa_pert) : 0.0;
}

std::string PotentialSpec::tag() const {
  if (family == PotentialFamily::gaussian) return curvature == 1.0 ? "gaussian" : fmt::format("gaussian(k={})", curvature);
  return fmt::format("perturbed(kappa={})", kappa_pert);
}

void PotentialSpec::validate() const {
  if (!(curvature > 0.0) || !std::isfinite(curvature)) fail(ErrorKind::config, "curvature must be positive");
  if (family == PotentialFamily::perturbed) {
    if (!(kappa_pert >= 0.0 && kappa_pert <= 0.5)) fail(ErrorKind::config, "kappa_pert must lie in [0, 0.5]");
    if (!(period > 0.0) || !std::isfinite(period)) fail(ErrorKind::config, "period must be positive");
  }
}

double PotentialSpec::u2(double a) const {
  return family == PotentialFamily::perturbed ? kappa_pert * std::cos(kTwoPi * a / period) : 0.0;
}

double PotentialSpec::u(double a) const { return 0.5 * curvature * a * a + u2(a); }

double PotentialSpec::du(double a) const {
  double v = curvature * a;
  if (family == PotentialFamily::perturbed) v -= kappa_pert * (kTwoPi / period) * std::sin(kTwoPi * a / period);
  return v;
}

double PotentialSpec::d2u(double a) const {
  double v = curvature;
  if (family == PotentialFamily::perturbed) {
    const double w = kTwoPi / period;
    v -= kappa_pert * w * w * std::cos(w * a);
  }
  return v;
}

bool operator==(const PotentialSpec& a, const PotentialSpec& b) {
  return a.family == b.family && a.curvature == b.curvature && a.kappa_pert == b.kappa_pert && a.period == b.period;
}

PotentialValues eval_potential(const PotentialSpec& spec, double a) {
  if (!std::isfinite(a)) fail(ErrorKind::domain, "eval_potential: non-finite field value");
  return {spec.u(a), spec.du(a), spec.d2u(a)};
}

double quadrature_half_width(const PotentialSpec& spec) { return 12.0 * std::sqrt(spec.Lambda()); }

double partition_function(const PotentialSpec& spec, double upsilon) {
  spec.validate();
  if (!std::isfinite(upsilon)) fail(ErrorKind::domain, "partition_function: non-finite tilt");
  const double L = quadrature_half_width(spec);
  const double m = log_peak(spec, upsilon);
  auto f = [&](double a) { return std::exp(-spec.u(a) + upsilon * a - m); };
  const double edge = std::max(f(-L), f(L));
  if (edge > 1e-15)
    fail(ErrorKind::numeric,
         fmt::format("partition_function: truncation at |a|={} leaves relative mass {:.3g} (tilt {})", L, edge, upsilon));
  double err = 0.0;
  const double I = GK::integrate(f, -L, L, 15, 1e-14, &err);
  if (!(I > 0.0) || !std::isfinite(I) || err > 1e-12)
    fail(ErrorKind::numeric, fmt::format("partition_function: no convergence (value {}, error estimate {:.3g})", I, err));
  return m + std::log(I);
}

double Ensemble::density(double a) const { return std::exp(-spec.u(a) + upsilon * a - logZ); }

double Ensemble::expect(const std::function<double(double)>& f) const {
  const double L = quadrature_half_width(spec);
  double err = 0.0;
  return GK::integrate([&](double a) { return f(a) * density(a); }, -L, L, 15, 1e-14, &err);
}

double Ensemble::expect_rule(const std::function<double(double)>& f) const {
  double s = 0.0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) s += rule.weights[i] * f(rule.nodes[i]);
  return s;
}

GaussRule tilted_gauss_rule(const PotentialSpec& spec, double upsilon, int n) {
  if (n < 1 || n > 80) fail(ErrorKind::range, "tilted_gauss_rule: node count out of range");
  using GL = boost::math::quadrature::gauss<double, 12>;
  const double L = quadrature_half_width(spec);
  const double m = log_peak(spec, upsilon);
  const int panels = 160;
  std::vector<double> x, w;
  x.reserve(panels * 12);
  w.reserve(panels * 12);
  const auto& ab = GL::abscissa();
  const auto& wt = GL::weights();
  for (int p = 0; p < panels; ++p) {
    const double a = -L + 2.0 * L * p / panels, b = -L + 2.0 * L * (p + 1) / panels;
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    for (std::size_t i = 0; i < ab.size(); ++i) {
      for (int sgn : {-1, 1}) {
        const double xi = mid + sgn * half * ab[i];
        x.push_back(xi);
        w.push_back(half * wt[i] * std::exp(-spec.u(xi) + upsilon * xi - m));
      }
    }
  }
  double tot = 0.0;
  for (double v : w) tot += v;
  for (double& v : w) v /= tot;

  // discretized Stieltjes procedure with orthonormal polynomials
  const std::size_t K = x.size();
  std::vector<double> pprev(K, 0.0), pcur(K, 1.0), q(K);
  Eigen::VectorXd diag(n), sub(std::max(n - 1, 1));
  double bprev = 0.0;
  for (int k = 0; k < n; ++k) {
    double a = 0.0;
    for (std::size_t i = 0; i < K; ++i) a += w[i] * x[i] * pcur[i] * pcur[i];
    diag(k) = a;
    if (k == n - 1) break;
    double nrm = 0.0;
    for (std::size_t i = 0; i < K; ++i) {
      q[i] = (x[i] - a) * pcur[i] - bprev * pprev[i];
      nrm += w[i] * q[i] * q[i];
    }
    const double b = std::sqrt(nrm);
    if (!(b > 0.0)) fail(ErrorKind::numeric, "tilted_gauss_rule: recurrence broke down");
    sub(k) = b;
    for (std::size_t i = 0; i < K; ++i) {
      pprev[i] = pcur[i];
      pcur[i] = q[i] / b;
    }
    bprev = b;
  }
  GaussRule r;
  if (n == 1) {
    r.nodes = {diag(0)};
    r.weights = {1.0};
    return r;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.computeFromTridiagonal(diag, sub.head(n - 1), Eigen::ComputeEigenvectors);
  r.nodes.resize(n);
  r.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    r.nodes[i] = es.eigenvalues()(i);
    const double v = es.eigenvectors()(0, i);
    r.weights[i] = v * v;
  }
  return r;
}

Ensemble tilt_for_mean(const PotentialSpec& spec, double sigma, const TiltOptions& opt) {
  spec.validate();
  if (!std::isfinite(sigma) || std::abs(sigma) > opt.sigma_cap)
    fail(ErrorKind::range, fmt::format("tilt_for_mean: |sigma|={} exceeds cap {}", sigma, opt.sigma_cap));
  Ensemble e;
  e.spec = spec;
  e.sigma = sigma;
  double ups = spec.is_even() && sigma == 0.0 ? 0.0 : spec.curvature * sigma;
  for (int it = 0;; ++it) {
    e.upsilon = ups;
    e.logZ = partition_function(spec, ups);
    const double m1 = e.expect([](double a) { return a; });
    const double m2 = e.expect([](double a) { return a * a; });
    const double var = m2 - m1 * m1;
    const double r = m1 - sigma;
    if (std::abs(r) <= opt.tol) break;
    if (it >= opt.max_iter || !(var > 0.0))
      fail(ErrorKind::numeric, fmt::format("tilt_for_mean: Newton failed for sigma={} (residual {:.3g})", sigma, r));
    ups -= r / var;
  }
  for (int k = 0; k <= 8; ++k) e.moments[k] = e.expect([k](double a) { return std::pow(a, k); });
  if (!(e.variance() > 0.0)) fail(ErrorKind::numeric, "tilt_for_mean: non-positive variance");
  e.rule = tilted_gauss_rule(spec, e.upsilon, opt.rule_nodes);
  return e;
}

CdfTable::CdfTable(const Ensemble& ens, int panels) {
  using GL = boost::math::quadrature::gauss<double, 7>;
  const double L = quadrature_half_width(ens.spec);
  lo_ = -L;
  hi_ = L;
  h_ = (hi_ - lo_) / panels;
  F_.assign(panels + 1, 0.0);
  for (int p = 0; p < panels; ++p) {
    const double a = lo_ + p * h_;
    F_[p + 1] = F_[p] + GL::integrate([&](double s) { return ens.density(s); }, a, a + h_);
  }
  const double tot = F_.back();
  for (double& v : F_) v /= tot;
}

double CdfTable::operator()(double a) const {
  if (a <= lo_) return 0.0;
  if (a >= hi_) return 1.0;
  const double u = (a - lo_) / h_;
  const std::size_t i = std::min(static_cast<std::size_t>(u), F_.size() - 2);
  const double f = u - static_cast<double>(i);
  return F_[i] * (1.0 - f) + F_[i + 1] * f;
}

EnsembleSampler::EnsembleSampler(const Ensemble& ens)
    : spec_(ens.spec),
      mean_(ens.upsilon / ens.spec.curvature),
      sd_(1.0 / std::sqrt(ens.spec.curvature)),
      u2sup_(ens.spec.u2_sup()) {}

double EnsembleSampler::draw(Rng& rng) {
  for (;;) {
    const double a = mean_ + sd_ * normal_(rng);
    ++proposed_;
    if (u2sup_ == 0.0 || unif_(rng) < std::exp(-spec_.u2(a) - u2sup_)) {
      ++accepted_;
      return a;
    }
    if (proposed_ > 10000 && static_cast<double>(accepted_) < 1e-3 * static_cast<double>(proposed_))
      fail(ErrorKind::config, fmt::format("sample_ensemble: acceptance rate {:.2g} below 1e-3", acceptance_rate()));
  }
}

void EnsembleSampler::fill(std::span<double> out, Rng& rng) {
  for (double& v : out) v = draw(rng);
}

double EnsembleSampler::acceptance_rate() const {
  return proposed_ == 0 ? 1.0 : static_cast<double>(accepted_) / static_cast<double>(proposed_);
}

std::vector<double> sample_ensemble(const Ensemble& ens, std::size_t n, Rng& rng) {
  if (n < 1) fail(ErrorKind::domain, "sample_ensemble: n must be at least 1");
  EnsembleSampler s(ens);
  std::vector<double> out(n);
  s.fill(out, rng);
  return out;
}

ModelConstants compute_constants(const PotentialSpec& spec, const std::vector<double>& betas) {
  if (!spec.is_even()) fail(ErrorKind::domain, "compute_constants: potential must be even");
  if (betas.empty()) fail(ErrorKind::config, "compute_constants: beta_2 is required");
  ModelConstants c;
  c.betas = betas;
  c.deg = 1 + static_cast<int>(betas.size());
  const Ensemble e0 = tilt_for_mean(spec, 0.0);
  c.alpha = 1.0 / e0.moments[2];
  const double h = 1e-4;
  TiltOptions opt;
  opt.rule_nodes = 1;
  const double up = tilt_for_mean(spec, h, opt).upsilon;
  const double um = tilt_for_mean(spec, -h, opt).upsilon;
  c.alpha_fd = (up - um) / (2.0 * h);
  if (!(c.alpha > 0.0) || std::abs(c.alpha - c.alpha_fd) > 1e-6)
    fail(ErrorKind::consistency,
         fmt::format("compute_constants: alpha={} disagrees with finite-difference tilt slope {}", c.alpha, c.alpha_fd));
  const double b2 = betas[0];
  c.beta = b2 * c.alpha * c.alpha;
  c.lambda = c.beta / c.alpha;
  const double m = e0.expect([&](double a) { return spec.du(a) * a * a * a; });
  c.R_lambda = c.lambda * c.lambda * c.lambda * m / 12.0 - b2 * c.lambda * c.lambda / 6.0;
  return c;
}

Model make_model(const PotentialSpec& spec, const std::vector<double>& betas) {
  return Model{spec, compute_constants(spec, betas)};
}

std::shared_ptr<const Ensemble> EnsembleFamily::at(double sigma) {
  {
    std::lock_guard<std::mutex> lk(mu_);
    auto it = cache_.find(sigma);
    if (it != cache_.end()) return it->second;
  }
  auto e = std::make_shared<const Ensemble>(tilt_for_mean(spec_, sigma, opt_));
  std::lock_guard<std::mutex> lk(mu_);
  return cache_.emplace(sigma, e).first->second;
}

}  // namespace glkpz
