#include "glkpz/cole_hopf.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace glkpz {

Mollifier::Mollifier(int N, double delta_S) : N_(N), delta_S_(delta_S) {
  if (N < 1) fail(ErrorKind::domain, "Mollifier: N must be positive");
  if (!(delta_S >= 0.0 && delta_S < 1.0)) fail(ErrorKind::domain, "Mollifier: delta_S must lie in [0, 1)");
  const double len = std::pow(static_cast<double>(N), 1.0 - delta_S);
  // sites with |k| < len carry positive weight
  radius_ = static_cast<int>(std::ceil(len)) - 1;
  if (radius_ < 0) radius_ = 0;
  w_.assign(2 * radius_ + 1, 0.0);
  double total = 0.0;
  for (int k = -radius_; k <= radius_; ++k) {
    const double u = k / len;
    const double v = std::abs(u) < 1.0 ? std::exp(-1.0 / (1.0 - u * u)) : 0.0;
    w_[k + radius_] = v;
    total += v;
  }
  for (auto& v : w_) v /= total;
}

void Mollifier::convolve(std::span<const double> in, std::span<double> out) const {
  const int M = static_cast<int>(in.size());
  if (out.size() != in.size()) fail(ErrorKind::shape, "Mollifier::convolve: output size mismatch");
  if (2 * radius_ + 1 > M)
    fail(ErrorKind::window, fmt::format("Mollifier::convolve: support {} exceeds the ring of {} sites", 2 * radius_ + 1, M));
  for (int x = 0; x < M; ++x) {
    double s = 0.0;
    for (int k = -radius_; k <= radius_; ++k) s += w_[k + radius_] * in[ring(x - k, M)];
    out[x] = s;
  }
}

std::vector<double> Mollifier::convolve(std::span<const double> in) const {
  std::vector<double> out(in.size());
  convolve(in, out);
  return out;
}

std::vector<double> log_cole_hopf(const FieldState& s, const Model& model, int N) {
  auto h = ring_heights(s, N);
  const double lam = model.c.lambda, shift = lam * model.c.R_lambda * s.t;
  for (auto& v : h) v = lam * v - shift;
  return h;
}

ColeHopfFields cole_hopf_field(const FieldState& s, const Model& model, const Mollifier& moll, double log_shift) {
  const auto logZ = log_cole_hopf(s, model, moll.N());
  const int M = static_cast<int>(logZ.size());
  ColeHopfFields f;
  f.t = s.t;
  f.lambda = model.c.lambda;
  f.R_lambda = model.c.R_lambda;
  f.log_shift = log_shift;
  f.Z.resize(M);
  for (int x = 0; x < M; ++x) {
    const double e = logZ[x] - log_shift;
    if (e > 700.0 || e < -700.0)
      fail(ErrorKind::range,
           fmt::format("cole_hopf_field: exponent {} at site {} overflows; rescale by subtracting the maximal height "
                       "(log_shift)", e, x));
    f.Z[x] = std::exp(e);
  }
  f.S = moll.convolve(f.Z);
  f.R.resize(M);
  f.Rw.resize(M);
  const double cut = std::pow(static_cast<double>(moll.N()), moll.delta_S() / 3.0);
  for (int x = 0; x < M; ++x) {
    f.R[x] = f.Z[x] / f.S[x];
    f.Rw[x] = cut * std::abs(f.R[x] - 1.0) <= 1.0 ? f.R[x] : 0.0;
  }
  return f;
}

AvConfig default_scales(double N, double delta_S) {
  if (!(N >= 1.0)) fail(ErrorKind::domain, "default_scales: N must be at least 1");
  AvConfig c;
  c.t_av = std::pow(N, -2.0 / 3.0 - 10.0 * delta_S);
  // guard against the ceiling picking up rounding noise on exact powers
  const double n = std::pow(N, 1.0 - 1.5 * delta_S);
  c.n_av = static_cast<int>(std::ceil(n - 1e-9 * n));
  if (c.n_av < 1) c.n_av = 1;
  return c;
}

Poly nonlinearity_poly(const Model& model, bool include_quadratic) {
  Poly F;
  for (int d = include_quadratic ? 2 : 3; d <= model.c.deg; ++d) {
    const double coef = d == 2 ? model.c.beta_d(2) / 3.0 : model.c.beta_d(d);
    if (coef == 0.0) continue;
    for (int k = 0; k <= d; ++k) {
      Poly p = Poly::constant(coef);
      for (int l = 1; l <= d; ++l) p = p * Poly::du(l - k);
      F = F + p;
    }
  }
  return F;
}

std::vector<LocalFn> local_fn_library(const Model& model) {
  const auto& c = model.c;
  const auto& sp = model.spec;
  const int deg = c.deg;
  const double b2 = c.beta_d(2);
  std::vector<LocalFn> lib;

  // renormalized quadratic, shifted to the window {1, 2}
  const Poly Q = (Poly::du(1) * Poly::du(2)) * (0.5 * b2) - (Poly::du(1) * Poly::phi(1) - Poly::constant(1.0)) * (0.5 * c.lambda);
  lib.push_back(make_local_fn("Q", Q, 2, sp));
  lib.push_back(make_local_fn("V'", Poly::du(0) - Poly::phi(0) * c.alpha, 1, sp));
  lib.push_back(make_local_fn("U'phi-1", Poly::du(1) * Poly::phi(1) - Poly::constant(1.0), 1, sp));
  lib.push_back(make_local_fn("alpha phi^2-1", Poly::phi(1, 2) * c.alpha - Poly::constant(1.0), 0, sp));

  const Poly F = nonlinearity_poly(model, true);
  lib.push_back(make_local_fn("F-F[tau_1]", F.shifted(deg) - F.shifted(deg + 1), 2, sp));

  // funny gradient on {1..5}
  const Poly G = Poly::phi(2) * Poly::du(2) * (Poly::du(1) - Poly::du(3)) +
                 Poly::phi(2) * (Poly::du(4) * Poly::du(5) - Poly::du(3) * Poly::du(4));
  lib.push_back(make_local_fn("G", G, 1, sp));
  lib.push_back(make_local_fn("G phi_1-1", G * Poly::phi(1) - Poly::constant(1.0), 0, sp));

  if (deg >= 3) {
    const Poly Fh = nonlinearity_poly(model, false).shifted(deg);
    if (!Fh.terms().empty()) {
      lib.push_back(make_local_fn("F>2", Fh, 2, sp));
      lib.push_back(make_local_fn("F>2 phi_w", Fh * Poly::phi(deg + 1), 1, sp));
      lib.push_back(make_local_fn("F>2 phi_w phi_w'", Fh * Poly::phi(deg + 1) * Poly::phi(deg + 2), 0, sp));
    }
  }
  return lib;
}

LocalFn library_entry(const Model& model, const std::string& name) {
  for (auto& f : local_fn_library(model))
    if (f.name == name) return f;
  fail(ErrorKind::config, fmt::format("library_entry: unknown local function '{}'", name));
}

namespace {

bool is_right(const LocalFn& q, Orientation o) {
  if (o == Orientation::right) return true;
  if (o == Orientation::left) return false;
  if (q.lo >= 1) return true;
  if (q.hi <= 0) return false;
  fail(ErrorKind::window, fmt::format("av_space: window {{{}..{}}} of '{}' is not one-sided", q.lo, q.hi, q.name));
}

}  // namespace

double av_space(const LocalFn& q, std::span<const double> phi, int x, const AvConfig& cfg, const Model& model, int N) {
  const int M = static_cast<int>(phi.size());
  const int n = cfg.n_av;
  if (n < 1) fail(ErrorKind::domain, "av_space: n_av must be positive");
  if (n + q.width() > M)
    fail(ErrorKind::window, fmt::format("av_space: n_av {} plus window {} does not fit in the ring of {}", n, q.width(), M));
  const bool right = is_right(q, cfg.orientation);
  const double c = model.c.lambda / std::sqrt(static_cast<double>(N));
  std::vector<double> win(q.width());
  double acc = 0.0, cum = 0.0;
  for (int j = 1; j <= n; ++j) {
    const int base = right ? x + j : x - j;
    for (int i = 0; i < q.width(); ++i) win[i] = phi[ring(base + q.lo + i, M)];
    double w = 1.0;
    if (!cfg.frozen_weights) {
      // right: phi_{x+1} + ... + phi_{x+j}; left: phi_x + ... + phi_{x-j+1}
      cum += right ? phi[ring(x + j, M)] : phi[ring(x - j + 1, M)];
      w = right ? std::exp(c * cum) : std::exp(-c * cum);
    }
    acc += q.eval(win) * w;
  }
  return acc / n;
}

double av_space(const LocalFn& q, const FieldState& s, int x, const AvConfig& cfg, const Model& model, int N) {
  return av_space(q, std::span<const double>(s.phi), x, cfg, model, N);
}

double av_spacetime_series(std::span<const double> times, std::span<const double> B, std::span<const double> logZx,
                           double t, double t_av, bool frozen_weights) {
  const std::size_t n = times.size();
  if (B.size() != n || logZx.size() != n) fail(ErrorKind::shape, "av_spacetime: series lengths differ");
  if (!(t_av >= 0.0)) fail(ErrorKind::domain, "av_spacetime: negative averaging time");
  const double tol = 1e-9 * std::max(1.0, std::abs(t));
  auto it = std::find_if(times.begin(), times.end(), [&](double s) { return std::abs(s - t) <= tol; });
  if (it == times.end()) fail(ErrorKind::window, fmt::format("av_spacetime: no stored snapshot at t = {}", t));
  const std::size_t k1 = static_cast<std::size_t>(it - times.begin());
  if (t_av == 0.0) return B[k1];
  const double t0 = t - t_av;
  if (times.front() > t0 + tol)
    fail(ErrorKind::window, fmt::format("av_spacetime: history starts at {} but [{}, {}] is required", times.front(), t0, t));
  auto g = [&](std::size_t k) { return frozen_weights ? B[k] : B[k] * std::exp(logZx[k] - logZx[k1]); };
  double integral = 0.0;
  std::size_t k = k1;
  while (k > 0 && times[k] > t0 + tol) {
    const double ta = times[k - 1], tb = times[k];
    const double ga = g(k - 1), gb = g(k);
    if (ta >= t0 - tol) {
      integral += 0.5 * (ga + gb) * (tb - ta);
    } else {
      const double th = (t0 - ta) / (tb - ta);
      const double gm = ga + th * (gb - ga);
      integral += 0.5 * (gm + gb) * (tb - t0);
    }
    --k;
  }
  return integral / t_av;
}

double av_spacetime(const LocalFn& q, std::span<const Snapshot> history, double t, int x, const AvConfig& cfg,
                    const Model& model, int N) {
  std::vector<double> times, B, logZ;
  const double tol = 1e-9 * std::max(1.0, std::abs(t));
  for (const auto& s : history) {
    if (s.t < t - cfg.t_av - tol - (history.size() > 1 ? history[1].t - history[0].t : 0.0)) continue;
    if (s.t > t + tol) continue;
    FieldState fs;
    fs.t = s.t;
    fs.phi = s.phi;
    fs.j0 = s.j0;
    times.push_back(s.t);
    B.push_back(av_space(q, fs, x, cfg, model, N));
    logZ.push_back(log_cole_hopf(fs, model, N)[ring(x, static_cast<int>(s.phi.size()))]);
  }
  if (times.empty()) fail(ErrorKind::window, "av_spacetime: empty history");
  return av_spacetime_series(times, B, logZ, t, cfg.t_av, cfg.frozen_weights);
}

double time_grad_av(std::span<const double> times, std::span<const double> f, double t, double t0) {
  if (times.size() != f.size() || times.empty()) fail(ErrorKind::shape, "time_grad_av: series lengths differ or are empty");
  if (!(t0 >= 0.0)) fail(ErrorKind::domain, "time_grad_av: negative averaging time");
  if (t0 == 0.0) return 0.0;
  const std::size_t n = times.size();
  auto value = [&](double s) {
    if (s <= 0.0) s = 0.0;
    if (s >= 1.0) s = 1.0;
    if (s <= times.front()) return f.front();
    if (s >= times.back()) return f.back();
    const auto it = std::upper_bound(times.begin(), times.end(), s);
    const std::size_t k = static_cast<std::size_t>(it - times.begin());
    const double th = (s - times[k - 1]) / (times[k] - times[k - 1]);
    return f[k - 1] + th * (f[k] - f[k - 1]);
  };
  // breakpoints of the piecewise-linear extension inside [t - t0, t]
  std::vector<double> pts{t - t0, t};
  for (std::size_t k = 0; k < n; ++k)
    if (times[k] > t - t0 && times[k] < t) pts.push_back(times[k]);
  if (0.0 > t - t0 && 0.0 < t) pts.push_back(0.0);
  if (1.0 > t - t0 && 1.0 < t) pts.push_back(1.0);
  std::sort(pts.begin(), pts.end());
  double integral = 0.0;
  for (std::size_t k = 1; k < pts.size(); ++k) integral += 0.5 * (value(pts[k - 1]) + value(pts[k])) * (pts[k] - pts[k - 1]);
  return value(t) - integral / t0;
}

TapReading tap_reading(std::span<const double> phi, std::span<const double> R, double av_x_max, double av_tx_max,
                       int N, double delta_S) {
  TapReading r;
  double mp = 0.0, mr = 0.0;
  for (double v : phi) mp = std::max(mp, std::abs(v));
  for (double v : R) mr = std::max(mr, std::abs(v - 1.0));
  const double n = N;
  r.phi_term = std::pow(n, -delta_S) * mp;
  r.r_term = std::pow(n, delta_S / 3.0) * mr;
  r.av_x = av_x_max;
  r.av_tx = av_tx_max;
  r.av_threshold = std::pow(n, -0.5 + delta_S);
  return r;
}

}  // namespace glkpz
