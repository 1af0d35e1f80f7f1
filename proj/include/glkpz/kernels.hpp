#pragma once

#include <cstdint>
#include <deque>
#include <memory>
#include <utility>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "glkpz/cole_hopf.hpp"
#include "glkpz/lattice.hpp"
#include "glkpz/potential.hpp"

namespace glkpz {

// exp(tau c_N Delta) on a ring of M sites, evaluated spectrally. apply() reuses
// internal FFT buffers, so one instance must not be shared between threads.
class HeatKernel {
public:
  HeatKernel(int M, double c_N, double tau);
  ~HeatKernel();
  HeatKernel(const HeatKernel& o);
  HeatKernel& operator=(const HeatKernel&) = delete;

  int M() const { return M_; }
  double c_N() const { return c_N_; }
  double tau() const { return tau_; }
  double at(int x, int y) const { return row_[ring(y - x, M_)]; }
  std::span<const double> row0() const { return row_; }
  std::vector<double> column(int y) const;
  Eigen::MatrixXd matrix() const;
  // out_x = sum_y H(x, y) in_y; in and out may alias
  void apply(std::span<const double> in, std::span<double> out) const;

private:
  struct Fft;
  int M_;
  double c_N_, tau_;
  std::vector<double> mult_, row_;
  std::unique_ptr<Fft> fft_;
};

HeatKernel heat_kernel(const ModelConstants& c, int N, int M, double s, double t);

inline int ring_distance(int x, int y, int M) {
  const int d = ring(x - y, M);
  return d <= M - d ? d : M - d;
}

struct HkProbe {
  double sup_weighted = 0.0;
  double l1_weighted = 0.0;
  double l2_weighted = 0.0;  // sum_y exp(2 kappa |x-y| / N) H^2
};

HkProbe hk_probe(const HeatKernel& H, double kappa, int x, int N);

// out = K * data for a dense kernel matrix
std::vector<double> duhamel_apply(const Eigen::MatrixXd& K, std::span<const double> data);
std::vector<double> duhamel_apply(const HeatKernel& H, std::span<const double> data);

class NoiseSource {
public:
  virtual ~NoiseSource() = default;
  virtual double dt() const = 0;
  virtual int M() const = 0;
  // increments of the next step; false when exhausted
  virtual bool next(std::span<double> dB) = 0;
};

// Replays the increments recorded by the lattice run, summing `aggregate` consecutive steps.
class RecordedNoise : public NoiseSource {
public:
  RecordedNoise(const NoiseRecording& rec, int aggregate = 1, std::size_t first_step = 0);
  double dt() const override { return rec_.dt * agg_; }
  int M() const override { return rec_.M; }
  bool next(std::span<double> dB) override;

private:
  const NoiseRecording& rec_;
  int agg_;
  std::size_t pos_;
};

class FreshNoise : public NoiseSource {
public:
  FreshNoise(Rng rng, int M, double dt) : rng_(std::move(rng)), M_(M), dt_(dt) {}
  double dt() const override { return dt_; }
  int M() const override { return M_; }
  bool next(std::span<double> dB) override;

private:
  Rng rng_;
  int M_;
  double dt_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

// Strang splitting for dQ = c_N Delta Q dt + sqrt(2) lambda N^{1/2} Q dB.
class SheSolver {
public:
  SheSolver(const ModelConstants& c, int N, int M, double dt);
  void step(std::vector<double>& Q, std::span<const double> dB) const;
  double dt() const { return dt_; }

private:
  double dt_, a_, drift_;
  HeatKernel half_;
};

struct SheSnapshot {
  double t = 0.0;
  std::vector<double> Q;
};

// Runs `steps` steps from data; snapshots at step 0 and every `stride` steps.
std::vector<SheSnapshot> she_run(std::span<const double> data, const ModelConstants& c, int N, NoiseSource& noise,
                                 std::size_t steps, std::size_t stride = 1);

enum class KernelMode { B, K };

struct StochKernelConfig {
  double zeta = 0.1;
  double zeta_large = 1.0;
  double kappa = 1.0;
  double delta_S = 0.1;
  KernelMode mode = KernelMode::B;
  // K-mode surrogate forcing
  std::vector<std::string> q_names{"Q"};
  int l_max = 2;
  int m_max = 2;
  double coef = 1.0;          // multiplies the prefactor N
  bool time_gradient = true;  // include the averaged time-gradient term
  bool stop_at_tap = true;    // freeze the forcing once a priori thresholds are crossed
};

// Lattice fields needed by the kernel equations, recorded at the start of every lattice step.
struct KernelDriver {
  int N = 0, M = 0;
  double dt = 0.0;
  std::vector<double> t;
  std::vector<double> j0;
  std::vector<double> phi;  // step-major
  std::vector<double> R;    // step-major
  std::vector<double> Rw;   // step-major
  std::vector<double> dB;   // step-major
  std::size_t steps() const { return t.size(); }
  std::span<const double> at(const std::vector<double>& v, std::size_t k) const {
    return {v.data() + k * M, static_cast<std::size_t>(M)};
  }
};

// Advances s by `steps` lattice steps, recording the driver.
KernelDriver record_driver(FieldState& s, const Model& model, const SimConfig& cfg, std::size_t steps, Rng& rng,
                           const Mollifier& moll);

// chi = S * 1{|x| <= N^{1+zeta}} on the ring (centered coordinates)
std::vector<double> cutoff_profile(int N, int M, double zeta, const Mollifier& moll);

class StochKernelSolver {
public:
  StochKernelSolver(const Model& model, int N, int M, double h, const StochKernelConfig& cfg);
  void reset(std::span<const double> data, double t0);
  void reset_delta(int y, double t0);
  // one exponential-Euler step of length h with R-cutoff Rw and increments dB; K-mode also
  // needs phi, R and the time at the step start
  void step(std::span<const double> Rw, std::span<const double> dB, std::span<const double> phi = {},
            std::span<const double> R = {}, double j0 = 0.0);
  // same with a step length other than h
  void step_len(double len, std::span<const double> Rw, std::span<const double> dB, std::span<const double> phi = {},
                std::span<const double> R = {}, double j0 = 0.0);
  std::span<const double> column() const { return K_; }
  double time() const { return t_; }
  double h() const { return h_; }
  bool tap_stopped() const { return stopped_; }

private:
  void k_forcing(std::span<const double> phi, std::span<const double> R, double j0, std::vector<double>& out);
  Model model_;
  int N_, M_;
  double h_, t_ = 0.0;
  StochKernelConfig cfg_;
  Mollifier moll_;
  const HeatKernel& semigroup(double len);
  std::vector<std::pair<double, std::unique_ptr<HeatKernel>>> semigroups_;
  std::vector<double> chi_, chi_large_, K_, tmp_, tmp2_;
  // K-mode state
  std::vector<LocalFn> qs_;
  AvConfig av_;
  bool stopped_ = false;
  struct AvHist {
    std::deque<double> t;
    std::deque<std::vector<double>> B, logZ;
  };
  std::vector<AvHist> av_hist_;
  std::deque<double> g_t_;
  std::deque<std::vector<double>> g_hist_;
};

struct KernelColumn {
  double s = 0.0, t = 0.0;
  int y = 0;
  std::vector<double> values;
};

// Solves the column with source y from lattice step s_step to t_step, aggregating
// `aggregate` lattice steps per kernel step.
KernelColumn stoch_kernel(const KernelDriver& drv, const Model& model, const StochKernelConfig& cfg, std::size_t s_step,
                          std::size_t t_step, int y, int aggregate = 1);

// sum_x exp(kappa |x - y| / N) |K_x|
double weighted_norm(std::span<const double> column, int y, double kappa, int N);

// max |K_{s,t} - K_{r,t} K_{s,r}| over the probed columns, with r in the middle of a kernel
// step so that both sub-solves use half steps around r.
double chapman_kolmogorov_residual(const KernelDriver& drv, const Model& model, const StochKernelConfig& cfg,
                                   std::size_t s_step, std::size_t t_step, std::size_t r_step, int aggregate,
                                   std::span<const int> ys);

// Deterministic version on heat kernels: max |H_{s,t} - H_{r,t} H_{s,r}|
double chapman_kolmogorov_residual(const ModelConstants& c, int N, int M, double s, double r, double t);

}  // namespace glkpz
