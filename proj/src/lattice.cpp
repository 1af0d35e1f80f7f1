#include "glkpz/lattice.hpp"

#include <cmath>

#include <fmt/format.h>

namespace glkpz {

double SimConfig::c_N(const ModelConstants& c) const {
  const double n = N;
  return n * n * c.alpha + 0.5 * n * c.lambda * c.lambda;
}

double SimConfig::dt(const Model& m) const { return theta / (4.0 * m.spec.Lambda() * c_N(m.c)); }

void SimConfig::validate(const Model& m, int max_window) const {
  if (N < 4) fail(ErrorKind::config, fmt::format("N: must be at least 4 (got {})", N));
  if (M % 2 != 0) fail(ErrorKind::config, fmt::format("M: must be even (got {})", M));
  if (M < 4 * m.c.deg) fail(ErrorKind::config, fmt::format("M: must be at least 4 deg = {} (got {})", 4 * m.c.deg, M));
  if (M <= 2 * max_window)
    fail(ErrorKind::config, fmt::format("M: must exceed twice the widest window {} (got {})", max_window, M));
  if (!(theta > 0.0) || theta > 0.25)
    fail(ErrorKind::config, fmt::format("theta: must lie in (0, 0.25] for explicit stability (got {})", theta));
  if (!(T >= 0.0)) fail(ErrorKind::config, "T: must be non-negative");
}

FieldState init_equilibrium(const Ensemble& ens, const SimConfig& cfg, Rng& rng) {
  FieldState s;
  s.phi.resize(cfg.M);
  EnsembleSampler sampler(ens);
  sampler.fill(s.phi, rng);
  return s;
}

Nonlinearity eval_nonlinearity(std::span<const double> w, const Model& model) {
  const int deg = model.c.deg;
  if (static_cast<int>(w.size()) != 2 * deg + 1)
    fail(ErrorKind::index, fmt::format("eval_nonlinearity: window of {} sites, need {}", w.size(), 2 * deg + 1));
  auto du = [&](int x) { return model.spec.du(w[x + deg]); };
  auto prod = [&](int from, int d) {
    double p = 1.0;
    for (int l = 0; l < d; ++l) p *= du(from + l);
    return p;
  };
  Nonlinearity r;
  for (int d = 2; d <= deg; ++d) {
    const double coef = d == 2 ? model.c.beta_d(2) / 3.0 : model.c.beta_d(d);
    double f = 0.0;
    for (int k = 0; k <= d; ++k) f += prod(1 - k, d);
    r.F += coef * f;
    r.Ftilde += coef * (prod(1, d) - prod(-d, d));
  }
  return r;
}

Stepper::Stepper(const Model& model, const SimConfig& cfg, double dt)
    : model_(model), cfg_(cfg), dt_(dt), H_(model.c.deg + 2) {
  du_.assign(cfg.M + 2 * H_, 0.0);
  drift_.assign(cfg.M, 0.0);
  dB_.assign(cfg.M, 0.0);
  prod_.assign(model.c.deg + 1, std::vector<double>(cfg.M + 2 * H_, 0.0));
}

void Stepper::load_du(const FieldState& s) {
  const int M = cfg_.M;
  for (int i = 0; i < M; ++i) du_[i + H_] = model_.spec.du(s.phi[i]);
  for (int h = 0; h < H_; ++h) {
    du_[h] = du_[M + h];
    du_[M + H_ + h] = du_[H_ + h];
  }
  // prod_[d][x + H] = U'_{x+1} ... U'_{x+d}, valid for x in [-H, M + H - d - 1]
  for (int d = 2; d <= model_.c.deg; ++d) {
    auto& P = prod_[d];
    for (int x = -H_; x + d + 1 + H_ <= M + 2 * H_; ++x) {
      double p = 1.0;
      for (int l = 1; l <= d; ++l) p *= du_[x + l + H_];
      P[x + H_] = p;
    }
  }
}

void Stepper::drift(const FieldState& s, std::span<double> out) {
  load_du(s);
  const int M = cfg_.M;
  const double n = cfg_.N, n2 = n * n, n32 = n * std::sqrt(n);
  for (int x = 0; x < M; ++x) {
    const double lap = du_[x + 1 + H_] - 2.0 * du_[x + H_] + du_[x - 1 + H_];
    double ft = 0.0;
    for (int d = 2; d <= model_.c.deg; ++d) {
      const double coef = d == 2 ? model_.c.beta_d(2) / 3.0 : model_.c.beta_d(d);
      if (coef == 0.0) continue;
      // prod over x-d..x-1 equals prod_[d] at x-d-1, which may lie in the left halo
      const int back = x - d - 1;
      const double pb = back >= -H_ ? prod_[d][back + H_] : prod_[d][back + M + H_];
      ft += coef * (prod_[d][x + H_] - pb);
    }
    const double v = n2 * lap + n32 * ft;
    if (!std::isfinite(v)) fail(ErrorKind::instability, fmt::format("drift: non-finite value at site {} (t={})", x, s.t));
    out[x] = v;
  }
}

double Stepper::F_at_origin(const FieldState& s) {
  (void)s;
  double F = 0.0;
  for (int d = 2; d <= model_.c.deg; ++d) {
    const double coef = d == 2 ? model_.c.beta_d(2) / 3.0 : model_.c.beta_d(d);
    double f = 0.0;
    for (int k = 0; k <= d; ++k) {
      double p = 1.0;
      for (int l = 1; l <= d; ++l) p *= du_[l - k + H_];
      f += p;
    }
    F += coef * f;
  }
  return F;
}

void Stepper::step_with(FieldState& s, std::span<const double> dB) {
  const int M = cfg_.M;
  drift(s, drift_);
  const double n = cfg_.N, sq2 = std::sqrt(2.0);
  const double dj = n * std::sqrt(n) * (du_[1 + H_] - du_[H_]) * dt_ + n * F_at_origin(s) * dt_ + sq2 * std::sqrt(n) * dB[0];
  double prev = dB[M - 1];
  for (int x = 0; x < M; ++x) {
    s.phi[x] += drift_[x] * dt_ + sq2 * n * (dB[x] - prev);
    prev = dB[x];
  }
  s.j0 += dj;
  s.t += dt_;
  ++s.steps;
  for (int x = 0; x < M; ++x) {
    if (!(std::abs(s.phi[x]) <= 1e3))
      throw BlowUp(fmt::format("step: |phi| exceeded 1e3 at site {} (value {}, t={})", x, s.phi[x], s.t), s);
  }
}

void Stepper::step(FieldState& s, Rng& rng, std::span<double> dB) {
  const double sd = std::sqrt(dt_);
  for (int x = 0; x < cfg_.M; ++x) dB_[x] = cfg_.noise ? sd * normal_(rng) : 0.0;
  step_with(s, dB_);
  if (!dB.empty()) std::copy(dB_.begin(), dB_.end(), dB.begin());
}

void drift(const FieldState& s, const Model& model, const SimConfig& cfg, std::span<double> out) {
  Stepper st(model, cfg, cfg.dt(model));
  st.drift(s, out);
}

void step(FieldState& s, const Model& model, const SimConfig& cfg, Rng& rng, std::span<double> dB) {
  Stepper st(model, cfg, cfg.dt(model));
  st.step(s, rng, dB);
}

RunResult run(FieldState& s, const Model& model, const SimConfig& cfg, double T, Rng& rng,
              const std::vector<Observer>& observers, NoiseRecording* rec) {
  if (!(T >= 0.0)) fail(ErrorKind::domain, "run: negative horizon");
  RunResult r;
  const double dtmax = cfg.dt(model);
  const auto n = static_cast<std::uint64_t>(std::ceil(T / dtmax - 1e-9));
  r.steps = n;
  r.dt = n == 0 ? dtmax : T / static_cast<double>(n);
  Stepper st(model, cfg, r.dt);
  std::vector<double> dB(cfg.M, 0.0);
  if (rec) {
    rec->dt = r.dt;
    rec->M = cfg.M;
    rec->dB.reserve(rec->dB.size() + n * cfg.M);
  }
  for (const auto& o : observers) o.fn(s, {});
  for (std::uint64_t k = 1; k <= n; ++k) {
    st.step(s, rng, dB);
    if (rec) rec->dB.insert(rec->dB.end(), dB.begin(), dB.end());
    for (const auto& o : observers)
      if (k % o.stride == 0) o.fn(s, dB);
  }
  return r;
}

std::vector<double> height_field(const FieldState& s, int N) {
  const int M = static_cast<int>(s.phi.size());
  const double c = 1.0 / std::sqrt(static_cast<double>(N));
  std::vector<double> j(M + 1);
  j[0] = s.j0;
  for (int x = 1; x <= M; ++x) j[x] = j[x - 1] + c * s.phi[x % M];
  return j;
}

std::vector<double> ring_heights(const FieldState& s, int N) {
  const int M = static_cast<int>(s.phi.size());
  const double c = 1.0 / std::sqrt(static_cast<double>(N));
  std::vector<double> h(M);
  h[0] = s.j0;
  for (int x = 1; x < M / 2; ++x) h[x] = h[x - 1] + c * s.phi[x];
  double cur = s.j0;
  for (int x = 0; x > -M / 2; --x) {
    cur -= c * s.phi[ring(x, M)];
    h[ring(x - 1, M)] = cur;
  }
  return h;
}

}  // namespace glkpz
