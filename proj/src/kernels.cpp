#include "glkpz/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>
#include <numbers>

#include <fftw3.h>
#include <fmt/format.h>

namespace glkpz {

namespace {
// FFTW planning is not thread-safe; execution of existing plans is.
std::mutex& fftw_plan_mutex() {
  static std::mutex mu;
  return mu;
}
}  // namespace

struct HeatKernel::Fft {
  int M;
  double* real = nullptr;
  fftw_complex* freq = nullptr;
  fftw_plan fwd = nullptr, bwd = nullptr;

  explicit Fft(int m) : M(m) {
    std::lock_guard lock(fftw_plan_mutex());
    real = fftw_alloc_real(M);
    freq = fftw_alloc_complex(M / 2 + 1);
    fwd = fftw_plan_dft_r2c_1d(M, real, freq, FFTW_ESTIMATE);
    bwd = fftw_plan_dft_c2r_1d(M, freq, real, FFTW_ESTIMATE);
  }
  ~Fft() {
    std::lock_guard lock(fftw_plan_mutex());
    fftw_destroy_plan(fwd);
    fftw_destroy_plan(bwd);
    fftw_free(real);
    fftw_free(freq);
  }
};

HeatKernel::HeatKernel(int M, double c_N, double tau) : M_(M), c_N_(c_N), tau_(tau) {
  if (M < 2) fail(ErrorKind::domain, "HeatKernel: ring must have at least 2 sites");
  if (!(tau >= 0.0)) fail(ErrorKind::domain, "HeatKernel: t must not precede s");
  fft_ = std::make_unique<Fft>(M);
  mult_.resize(M / 2 + 1);
  for (int k = 0; k <= M / 2; ++k) {
    const double ev = 2.0 * std::cos(2.0 * std::numbers::pi * k / M) - 2.0;
    mult_[k] = std::exp(tau * c_N * ev);
  }
  // H(0, d) from the inverse transform of the multipliers
  for (int k = 0; k <= M / 2; ++k) {
    fft_->freq[k][0] = mult_[k];
    fft_->freq[k][1] = 0.0;
  }
  fftw_execute_dft_c2r(fft_->bwd, fft_->freq, fft_->real);
  row_.resize(M);
  for (int d = 0; d < M; ++d) row_[d] = fft_->real[d] / M;
  if (tau == 0.0) {
    std::fill(row_.begin(), row_.end(), 0.0);
    row_[0] = 1.0;
  }
}

HeatKernel::~HeatKernel() = default;

HeatKernel::HeatKernel(const HeatKernel& o)
    : M_(o.M_), c_N_(o.c_N_), tau_(o.tau_), mult_(o.mult_), row_(o.row_), fft_(std::make_unique<Fft>(o.M_)) {}

std::vector<double> HeatKernel::column(int y) const {
  std::vector<double> c(M_);
  for (int x = 0; x < M_; ++x) c[x] = at(x, y);
  return c;
}

Eigen::MatrixXd HeatKernel::matrix() const {
  Eigen::MatrixXd H(M_, M_);
  for (int x = 0; x < M_; ++x)
    for (int y = 0; y < M_; ++y) H(x, y) = at(x, y);
  return H;
}

void HeatKernel::apply(std::span<const double> in, std::span<double> out) const {
  if (static_cast<int>(in.size()) != M_ || static_cast<int>(out.size()) != M_)
    fail(ErrorKind::shape, fmt::format("HeatKernel::apply: expected {} values", M_));
  if (tau_ == 0.0) {
    if (in.data() != out.data()) std::copy(in.begin(), in.end(), out.begin());
    return;
  }
  std::copy(in.begin(), in.end(), fft_->real);
  fftw_execute_dft_r2c(fft_->fwd, fft_->real, fft_->freq);
  for (int k = 0; k <= M_ / 2; ++k) {
    fft_->freq[k][0] *= mult_[k];
    fft_->freq[k][1] *= mult_[k];
  }
  fftw_execute_dft_c2r(fft_->bwd, fft_->freq, fft_->real);
  const double inv = 1.0 / M_;
  for (int x = 0; x < M_; ++x) out[x] = fft_->real[x] * inv;
}

HeatKernel heat_kernel(const ModelConstants& c, int N, int M, double s, double t) {
  if (t < s) fail(ErrorKind::domain, fmt::format("heat_kernel: t = {} precedes s = {}", t, s));
  const double n = N;
  return HeatKernel(M, n * n * c.alpha + 0.5 * n * c.lambda * c.lambda, t - s);
}

HkProbe hk_probe(const HeatKernel& H, double kappa, int x, int N) {
  if (!(kappa >= 0.0)) fail(ErrorKind::domain, "hk_probe: kappa must be non-negative");
  HkProbe p;
  const int M = H.M();
  for (int y = 0; y < M; ++y) {
    const double w = std::exp(kappa * ring_distance(x, y, M) / N);
    const double h = H.at(x, y);
    p.sup_weighted = std::max(p.sup_weighted, w * h);
    p.l1_weighted += w * h;
    p.l2_weighted += w * w * h * h;
  }
  return p;
}

std::vector<double> duhamel_apply(const Eigen::MatrixXd& K, std::span<const double> data) {
  if (K.cols() != static_cast<Eigen::Index>(data.size()))
    fail(ErrorKind::shape, fmt::format("duhamel_apply: kernel has {} columns, data has {} values", K.cols(), data.size()));
  Eigen::Map<const Eigen::VectorXd> v(data.data(), static_cast<Eigen::Index>(data.size()));
  Eigen::VectorXd r = K * v;
  return {r.data(), r.data() + r.size()};
}

std::vector<double> duhamel_apply(const HeatKernel& H, std::span<const double> data) {
  if (static_cast<int>(data.size()) != H.M())
    fail(ErrorKind::shape, fmt::format("duhamel_apply: kernel has {} sites, data has {} values", H.M(), data.size()));
  std::vector<double> out(data.size());
  H.apply(data, out);
  return out;
}

RecordedNoise::RecordedNoise(const NoiseRecording& rec, int aggregate, std::size_t first_step)
    : rec_(rec), agg_(aggregate), pos_(first_step) {
  if (aggregate < 1) fail(ErrorKind::domain, "RecordedNoise: aggregate must be positive");
}

bool RecordedNoise::next(std::span<double> dB) {
  if (pos_ + agg_ > rec_.steps()) return false;
  std::fill(dB.begin(), dB.end(), 0.0);
  for (int a = 0; a < agg_; ++a) {
    const auto row = rec_.at(pos_ + a);
    for (int x = 0; x < rec_.M; ++x) dB[x] += row[x];
  }
  pos_ += agg_;
  return true;
}

bool FreshNoise::next(std::span<double> dB) {
  const double sd = std::sqrt(dt_);
  for (int x = 0; x < M_; ++x) dB[x] = sd * normal_(rng_);
  return true;
}

SheSolver::SheSolver(const ModelConstants& c, int N, int M, double dt)
    : dt_(dt),
      a_(std::sqrt(2.0) * c.lambda * std::sqrt(static_cast<double>(N))),
      drift_(c.lambda * c.lambda * N * dt),
      half_(heat_kernel(c, N, M, 0.0, 0.5 * dt)) {
  if (!(dt > 0.0)) fail(ErrorKind::domain, "SheSolver: dt must be positive");
}

void SheSolver::step(std::vector<double>& Q, std::span<const double> dB) const {
  const int M = static_cast<int>(Q.size());
  half_.apply(Q, Q);
  for (int x = 0; x < M; ++x) Q[x] = std::max(Q[x], 0.0) * std::exp(a_ * dB[x] - drift_);
  half_.apply(Q, Q);
  // roundoff of the spectral convolution can leave tiny negative values
  for (auto& q : Q) q = std::max(q, 0.0);
}

std::vector<SheSnapshot> she_run(std::span<const double> data, const ModelConstants& c, int N, NoiseSource& noise,
                                 std::size_t steps, std::size_t stride) {
  for (double v : data)
    if (!(v >= 0.0)) fail(ErrorKind::domain, "she_run: initial data must be non-negative");
  if (static_cast<int>(data.size()) != noise.M()) fail(ErrorKind::shape, "she_run: data and noise sizes differ");
  if (stride == 0) stride = 1;
  SheSolver solver(c, N, static_cast<int>(data.size()), noise.dt());
  std::vector<double> Q(data.begin(), data.end()), dB(data.size());
  std::vector<SheSnapshot> out;
  out.push_back({0.0, Q});
  for (std::size_t k = 1; k <= steps; ++k) {
    if (!noise.next(dB)) fail(ErrorKind::window, fmt::format("she_run: noise exhausted after {} steps", k - 1));
    solver.step(Q, dB);
    if (k % stride == 0 || k == steps) out.push_back({static_cast<double>(k) * noise.dt(), Q});
  }
  return out;
}

KernelDriver record_driver(FieldState& s, const Model& model, const SimConfig& cfg, std::size_t steps, Rng& rng,
                           const Mollifier& moll) {
  KernelDriver d;
  d.N = cfg.N;
  d.M = cfg.M;
  d.dt = cfg.dt(model);
  Stepper st(model, cfg, d.dt);
  const std::size_t M = cfg.M;
  d.t.reserve(steps);
  d.j0.reserve(steps);
  d.phi.reserve(steps * M);
  d.R.reserve(steps * M);
  d.Rw.reserve(steps * M);
  d.dB.reserve(steps * M);
  std::vector<double> dB(M);
  for (std::size_t k = 0; k < steps; ++k) {
    // R is shift invariant; anchor the exponent at the current maximum
    const auto logZ = log_cole_hopf(s, model, cfg.N);
    const double shift = *std::max_element(logZ.begin(), logZ.end());
    const auto f = cole_hopf_field(s, model, moll, shift);
    d.t.push_back(s.t);
    d.j0.push_back(s.j0);
    d.phi.insert(d.phi.end(), s.phi.begin(), s.phi.end());
    d.R.insert(d.R.end(), f.R.begin(), f.R.end());
    d.Rw.insert(d.Rw.end(), f.Rw.begin(), f.Rw.end());
    st.step(s, rng, dB);
    d.dB.insert(d.dB.end(), dB.begin(), dB.end());
  }
  return d;
}

std::vector<double> cutoff_profile(int N, int M, double zeta, const Mollifier& moll) {
  const double r = std::pow(static_cast<double>(N), 1.0 + zeta);
  std::vector<double> ind(M);
  for (int i = 0; i < M; ++i) {
    const int x = i < M / 2 ? i : i - M;
    ind[i] = std::abs(x) <= r ? 1.0 : 0.0;
  }
  return moll.convolve(ind);
}

StochKernelSolver::StochKernelSolver(const Model& model, int N, int M, double h, const StochKernelConfig& cfg)
    : model_(model), N_(N), M_(M), h_(h), cfg_(cfg), moll_(N, cfg.delta_S) {
  if (!(h > 0.0)) fail(ErrorKind::domain, "StochKernelSolver: step must be positive");
  if (!(cfg.zeta > 0.0) || cfg.zeta > cfg.zeta_large)
    fail(ErrorKind::config, "StochKernelSolver: need 0 < zeta <= zeta_large");
  chi_ = cutoff_profile(N, M, cfg.zeta, moll_);
  chi_large_ = cutoff_profile(N, M, cfg.zeta_large, moll_);
  K_.assign(M, 0.0);
  tmp_.assign(M, 0.0);
  tmp2_.assign(M, 0.0);
  if (cfg.mode == KernelMode::K) {
    for (const auto& name : cfg.q_names) qs_.push_back(library_entry(model, name));
    av_ = default_scales(N, cfg.delta_S);
    av_hist_.resize(qs_.size());
  }
}

const HeatKernel& StochKernelSolver::semigroup(double len) {
  for (const auto& [l, hk] : semigroups_)
    if (std::abs(l - len) <= 1e-12 * len) return *hk;
  const double n = N_;
  const double cN = n * n * model_.c.alpha + 0.5 * n * model_.c.lambda * model_.c.lambda;
  semigroups_.emplace_back(len, std::make_unique<HeatKernel>(M_, cN, len));
  return *semigroups_.back().second;
}

void StochKernelSolver::reset(std::span<const double> data, double t0) {
  if (static_cast<int>(data.size()) != M_) fail(ErrorKind::shape, "StochKernelSolver::reset: size mismatch");
  K_.assign(data.begin(), data.end());
  t_ = t0;
  stopped_ = false;
  for (auto& h : av_hist_) h = AvHist{};
  g_t_.clear();
  g_hist_.clear();
}

void StochKernelSolver::reset_delta(int y, double t0) {
  std::vector<double> e(M_, 0.0);
  e[ring(y, M_)] = 1.0;
  reset(e, t0);
}

void StochKernelSolver::step(std::span<const double> Rw, std::span<const double> dB, std::span<const double> phi,
                             std::span<const double> R, double j0) {
  step_len(h_, Rw, dB, phi, R, j0);
}

namespace {

// sum_{m=0}^{m_max} D^m u with D = sum_{0<|l|<=l_max} grad_l / |l|
void gradient_series(std::span<const double> u, int l_max, int m_max, std::vector<double>& out) {
  const int M = static_cast<int>(u.size());
  std::vector<double> cur(u.begin(), u.end()), nxt(M);
  out.assign(u.begin(), u.end());
  for (int m = 1; m <= m_max; ++m) {
    for (int x = 0; x < M; ++x) {
      double s = 0.0;
      for (int l = 1; l <= l_max; ++l)
        s += ((cur[ring(x + l, M)] - cur[x]) + (cur[ring(x - l, M)] - cur[x])) / l;
      nxt[x] = s;
    }
    std::swap(cur, nxt);
    for (int x = 0; x < M; ++x) out[x] += cur[x];
  }
}

// mean over [t - w, t] of a piecewise-linear history extended by its first value
double window_mean(const std::deque<double>& ts, const std::deque<std::vector<double>>& vs, int x, double t, double w) {
  const double lo = t - w;
  double integral = 0.0;
  const std::size_t n = ts.size();
  for (std::size_t k = n - 1; k > 0; --k) {
    const double tb = ts[k], ta = ts[k - 1];
    if (tb <= lo) break;
    const double vb = vs[k][x], va = vs[k - 1][x];
    if (ta >= lo) {
      integral += 0.5 * (va + vb) * (tb - ta);
    } else {
      const double th = (lo - ta) / (tb - ta);
      integral += 0.5 * (va + th * (vb - va) + vb) * (tb - lo);
    }
  }
  if (ts.front() > lo) integral += vs.front()[x] * (ts.front() - lo);
  return integral / w;
}

}  // namespace

void StochKernelSolver::k_forcing(std::span<const double> phi, std::span<const double> R, double j0,
                                  std::vector<double>& out) {
  out.assign(M_, 0.0);
  FieldState fs;
  fs.t = t_;
  fs.phi.assign(phi.begin(), phi.end());
  fs.j0 = j0;
  const auto logZ = log_cole_hopf(fs, model_, N_);
  double avx_max = 0.0, avtx_max = 0.0;
  std::vector<std::vector<double>> avx(qs_.size(), std::vector<double>(M_)), avtx = avx;
  for (std::size_t i = 0; i < qs_.size(); ++i) {
    auto& hist = av_hist_[i];
    for (int x = 0; x < M_; ++x) avx[i][x] = av_space(qs_[i], phi, x, av_, model_, N_);
    hist.t.push_back(t_);
    hist.B.push_back(avx[i]);
    hist.logZ.push_back(logZ);
    while (hist.t.size() > 2 && hist.t[1] <= t_ - av_.t_av) {
      hist.t.pop_front();
      hist.B.pop_front();
      hist.logZ.pop_front();
    }
    for (int x = 0; x < M_; ++x) {
      // integrand B_x(s) Z_{s,x} / Z_{t,x}, extended by its earliest value before the history starts
      double integral = 0.0;
      const double lo = t_ - av_.t_av;
      const std::size_t n = hist.t.size();
      auto val = [&](std::size_t k) { return hist.B[k][x] * std::exp(hist.logZ[k][x] - logZ[x]); };
      if (av_.t_av == 0.0 || n == 1) {
        avtx[i][x] = val(n - 1);
      } else {
        for (std::size_t k = n - 1; k > 0; --k) {
          const double tb = hist.t[k], ta = hist.t[k - 1];
          if (tb <= lo) break;
          const double vb = val(k), va = val(k - 1);
          if (ta >= lo) {
            integral += 0.5 * (va + vb) * (tb - ta);
          } else {
            const double th = (lo - ta) / (tb - ta);
            integral += 0.5 * (va + th * (vb - va) + vb) * (tb - lo);
          }
        }
        if (hist.t.front() > lo) integral += val(0) * (hist.t.front() - lo);
        avtx[i][x] = integral / av_.t_av;
      }
      avx_max = std::max(avx_max, std::abs(avx[i][x]));
      avtx_max = std::max(avtx_max, std::abs(avtx[i][x]));
    }
  }
  if (cfg_.stop_at_tap && !stopped_) {
    const auto tap = tap_reading(phi, R, avx_max, avtx_max, N_, cfg_.delta_S);
    if (tap.crossed()) stopped_ = true;
  }
  const double ind = stopped_ ? 0.0 : 1.0;
  const double pref = N_ * cfg_.coef;
  std::vector<double> u(M_), g(M_), du(M_), dg(M_, 0.0);
  for (std::size_t i = 0; i < qs_.size(); ++i) {
    for (int x = 0; x < M_; ++x) u[x] = avtx[i][x] * R[x] * K_[x];
    gradient_series(moll_.convolve(u), cfg_.l_max, cfg_.m_max, du);
    for (int x = 0; x < M_; ++x) out[x] += pref * chi_[x] * ind * du[x];
    if (cfg_.time_gradient) {
      for (int x = 0; x < M_; ++x) g[x] = avx[i][x] * R[x] * K_[x];
      std::vector<double> gi;
      gradient_series(moll_.convolve(g), cfg_.l_max, cfg_.m_max, gi);
      for (auto& v : gi) v *= ind;
      for (int x = 0; x < M_; ++x) dg[x] += gi[x];
    }
  }
  if (cfg_.time_gradient && !qs_.empty()) {
    g_t_.push_back(t_);
    g_hist_.push_back(dg);
    while (g_t_.size() > 2 && g_t_[1] <= t_ - av_.t_av) {
      g_t_.pop_front();
      g_hist_.pop_front();
    }
    if (av_.t_av > 0.0)
      for (int x = 0; x < M_; ++x) out[x] += pref * chi_[x] * (dg[x] - window_mean(g_t_, g_hist_, x, t_, av_.t_av));
  }
}

void StochKernelSolver::step_len(double len, std::span<const double> Rw, std::span<const double> dB,
                                 std::span<const double> phi, std::span<const double> R, double j0) {
  const double a = std::sqrt(2.0) * model_.c.lambda * std::sqrt(static_cast<double>(N_));
  for (int x = 0; x < M_; ++x) tmp_[x] = a * Rw[x] * K_[x] * dB[x];
  moll_.convolve(tmp_, tmp2_);
  for (int x = 0; x < M_; ++x) K_[x] += chi_large_[x] * tmp2_[x];
  if (cfg_.mode == KernelMode::K) {
    if (phi.empty() || R.empty()) fail(ErrorKind::window, "StochKernelSolver: K-mode step needs phi and R");
    std::vector<double> f;
    k_forcing(phi, R, j0, f);
    for (int x = 0; x < M_; ++x) K_[x] += f[x] * len;
  }
  semigroup(len).apply(K_, K_);
  for (double v : K_)
    if (!std::isfinite(v)) fail(ErrorKind::instability, fmt::format("StochKernelSolver: non-finite value at t = {}", t_));
  t_ += len;
}

namespace {

// advance over lattice steps [from, to) in blocks of `agg`, the last block possibly shorter
void advance(StochKernelSolver& sol, const KernelDriver& drv, std::size_t from, std::size_t to, int agg,
             std::size_t first_block = 0) {
  std::vector<double> dB(drv.M);
  std::size_t k = from;
  bool first = true;
  while (k < to) {
    std::size_t len = agg;
    if (first && first_block > 0) len = first_block;
    first = false;
    len = std::min(len, to - k);
    std::fill(dB.begin(), dB.end(), 0.0);
    for (std::size_t a = 0; a < len; ++a) {
      const auto row = drv.at(drv.dB, k + a);
      for (int x = 0; x < drv.M; ++x) dB[x] += row[x];
    }
    sol.step_len(drv.dt * static_cast<double>(len), drv.at(drv.Rw, k), dB, drv.at(drv.phi, k), drv.at(drv.R, k),
                 drv.j0[k]);
    k += len;
  }
}

void check_range(const KernelDriver& drv, std::size_t s_step, std::size_t t_step) {
  if (s_step > t_step) fail(ErrorKind::domain, "stoch_kernel: t precedes s");
  if (t_step > drv.steps())
    fail(ErrorKind::window, fmt::format("stoch_kernel: driver covers {} steps, {} requested", drv.steps(), t_step));
}

}  // namespace

KernelColumn stoch_kernel(const KernelDriver& drv, const Model& model, const StochKernelConfig& cfg, std::size_t s_step,
                          std::size_t t_step, int y, int aggregate) {
  check_range(drv, s_step, t_step);
  if (aggregate < 1) fail(ErrorKind::domain, "stoch_kernel: aggregate must be positive");
  StochKernelSolver sol(model, drv.N, drv.M, drv.dt * aggregate, cfg);
  const double t0 = s_step < drv.steps() ? drv.t[s_step] : drv.t.back() + drv.dt;
  sol.reset_delta(y, t0);
  advance(sol, drv, s_step, t_step, aggregate);
  KernelColumn c;
  c.s = t0;
  c.t = sol.time();
  c.y = y;
  c.values.assign(sol.column().begin(), sol.column().end());
  return c;
}

double weighted_norm(std::span<const double> column, int y, double kappa, int N) {
  const int M = static_cast<int>(column.size());
  double s = 0.0;
  for (int x = 0; x < M; ++x) s += std::exp(kappa * ring_distance(x, y, M) / N) * std::abs(column[x]);
  return s;
}

double chapman_kolmogorov_residual(const KernelDriver& drv, const Model& model, const StochKernelConfig& cfg,
                                   std::size_t s_step, std::size_t t_step, std::size_t r_step, int aggregate,
                                   std::span<const int> ys) {
  check_range(drv, s_step, t_step);
  if (r_step < s_step || r_step > t_step) fail(ErrorKind::domain, "chapman_kolmogorov_residual: r outside [s, t]");
  if (r_step == t_step) return 0.0;
  double res = 0.0;
  for (int y : ys) {
    StochKernelSolver full(model, drv.N, drv.M, drv.dt * aggregate, cfg);
    full.reset_delta(y, drv.t[s_step]);
    advance(full, drv, s_step, t_step, aggregate);
    StochKernelSolver left(model, drv.N, drv.M, drv.dt * aggregate, cfg);
    left.reset_delta(y, drv.t[s_step]);
    advance(left, drv, s_step, r_step, aggregate);
    // continue from r on the grid shifted to r, first block up to the next grid point of the full solve
    StochKernelSolver right(model, drv.N, drv.M, drv.dt * aggregate, cfg);
    right.reset(left.column(), drv.t[r_step]);
    const std::size_t off = (r_step - s_step) % aggregate;
    advance(right, drv, r_step, t_step, aggregate, off == 0 ? 0 : aggregate - off);
    const auto a = full.column(), b = right.column();
    for (int x = 0; x < drv.M; ++x) res = std::max(res, std::abs(a[x] - b[x]));
  }
  return res;
}

double chapman_kolmogorov_residual(const ModelConstants& c, int N, int M, double s, double r, double t) {
  if (!(s <= r && r <= t)) fail(ErrorKind::domain, "chapman_kolmogorov_residual: need s <= r <= t");
  const auto Hst = heat_kernel(c, N, M, s, t).matrix();
  const auto Hrt = heat_kernel(c, N, M, r, t).matrix();
  const auto Hsr = heat_kernel(c, N, M, s, r).matrix();
  return (Hst - Hrt * Hsr).cwiseAbs().maxCoeff();
}

}  // namespace glkpz
