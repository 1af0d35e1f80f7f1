#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "glkpz/errors.hpp"
#include "glkpz/potential.hpp"
#include "glkpz/rng.hpp"

namespace glkpz {

struct SimConfig {
  int N = 16;
  int M = 128;
  double theta = 0.05;
  double T = 0.0;
  std::uint64_t seed = 1;
  bool noise = true;

  // c_N = N^2 alpha + N lambda^2 / 2
  double c_N(const ModelConstants& c) const;
  // dt = theta / (4 Lambda c_N)
  double dt(const Model& m) const;
  void validate(const Model& m, int max_window = 0) const;
};

struct FieldState {
  double t = 0.0;
  std::vector<double> phi;
  double j0 = 0.0;
  std::uint64_t steps = 0;
};

class BlowUp : public Error {
public:
  BlowUp(const std::string& msg, FieldState s) : Error(ErrorKind::instability, msg), state(std::move(s)) {}
  FieldState state;
};

// ring index of lattice site x
inline int ring(int x, int M) {
  const int r = x % M;
  return r < 0 ? r + M : r;
}

FieldState init_equilibrium(const Ensemble& ens, const SimConfig& cfg, Rng& rng);

struct Nonlinearity {
  double F = 0.0;
  double Ftilde = 0.0;
};

// window[i] = phi_{i - deg}, i = 0..2 deg; returns F[phi] and F[phi] - F[tau_{-1} phi]
Nonlinearity eval_nonlinearity(std::span<const double> window, const Model& model);

void drift(const FieldState& s, const Model& model, const SimConfig& cfg, std::span<double> out);

class Stepper {
public:
  Stepper(const Model& model, const SimConfig& cfg, double dt);
  // one Euler-Maruyama step; the Brownian increments used are written to dB when it is non-empty
  void step(FieldState& s, Rng& rng, std::span<double> dB = {});
  // step with caller-supplied increments
  void step_with(FieldState& s, std::span<const double> dB);
  void drift(const FieldState& s, std::span<double> out);
  double F_at_origin(const FieldState& s);
  double dt() const { return dt_; }

private:
  void load_du(const FieldState& s);
  Model model_;
  SimConfig cfg_;
  double dt_;
  int H_;
  std::vector<double> du_, drift_, dB_;
  std::vector<std::vector<double>> prod_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

void step(FieldState& s, const Model& model, const SimConfig& cfg, Rng& rng, std::span<double> dB = {});

struct Observer {
  std::uint64_t stride = 1;
  std::function<void(const FieldState&, std::span<const double> dB)> fn;
};

struct NoiseRecording {
  double dt = 0.0;
  int M = 0;
  std::vector<double> dB;  // step-major
  std::size_t steps() const { return M == 0 ? 0 : dB.size() / static_cast<std::size_t>(M); }
  std::span<const double> at(std::size_t k) const { return {dB.data() + k * M, static_cast<std::size_t>(M)}; }
};

struct RunResult {
  std::uint64_t steps = 0;
  double dt = 0.0;
};

// Advances to s.t + T on a uniform grid with step T / ceil(T / dt_max).
RunResult run(FieldState& s, const Model& model, const SimConfig& cfg, double T, Rng& rng,
              const std::vector<Observer>& observers = {}, NoiseRecording* rec = nullptr);

// j_x for x = 0..M
std::vector<double> height_field(const FieldState& s, int N);
// j_x at ring index i, with x = i for i < M/2 and x = i - M otherwise
std::vector<double> ring_heights(const FieldState& s, int N);

}  // namespace glkpz
