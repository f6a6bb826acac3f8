#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "flowcast/dit.hpp"
#include "flowcast/rng.hpp"

namespace flowcast {

struct SamplerConfig {
  int n_steps = 20;
  void validate() const;
};

/// v(x, t) for the sampler; the DiT is one implementation, tests use stubs.
using VelocityField = std::function<Matrix(const Matrix& x, double t)>;

/// Standard normal noise for `frames` frames of [rows_per_frame, cols]; each
/// frame has its own stream derived from `seed`.
Matrix frame_noise(int frames, int rows_per_frame, int cols, std::uint64_t seed);

/// x_t = (1 - t) eps + t x1
Matrix interpolate(const Matrix& x1, const Matrix& eps, double t);

struct FlowDraw {
  double t = 0.0;
  Matrix eps;
  Matrix xt;
  Matrix velocity;  // x1 - eps
};

FlowDraw draw_flow(const Matrix& x1, int frames, Rng& rng);

/// Flow-matching MSE over the target frames for one window. Throws
/// DivergenceError when the loss is not finite.
ad::Var fm_loss(ad::Tape& tape, const DitModel& model, const Matrix& context, const Matrix& target,
                const std::vector<int>& slots, Rng& rng, FlowDraw* draw = nullptr);

/// Uniform-grid Euler integration from t = 0 to 1.
Matrix euler_integrate(const VelocityField& v, Matrix x, const SamplerConfig& sampler);

/// Draws noise for `n_target` frames from `seed` and integrates the model's
/// velocity field. Throws DivergenceError on a non-finite state.
Matrix sample(const DitModel& model, const Matrix& context, const std::vector<int>& slots, int n_target,
              std::uint64_t seed, const SamplerConfig& sampler);

}  // namespace flowcast
