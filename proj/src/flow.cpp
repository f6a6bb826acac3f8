#include "flowcast/flow.hpp"

#include <cmath>
#include <sstream>

#include "flowcast/errors.hpp"

namespace flowcast {

void SamplerConfig::validate() const {
  if (n_steps < 1) throw ConfigError("sampler n_steps must be >= 1");
}

Matrix frame_noise(int frames, int rows_per_frame, int cols, std::uint64_t seed) {
  Matrix eps(static_cast<Eigen::Index>(frames) * rows_per_frame, cols);
  for (int f = 0; f < frames; ++f) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(f)));
    for (int r = 0; r < rows_per_frame; ++r) {
      for (int c = 0; c < cols; ++c) eps(f * rows_per_frame + r, c) = rng.normal();
    }
  }
  return eps;
}

Matrix interpolate(const Matrix& x1, const Matrix& eps, double t) {
  if (t == 0.0) return eps;
  if (t == 1.0) return x1;
  return (1.0 - t) * eps + t * x1;
}

FlowDraw draw_flow(const Matrix& x1, int frames, Rng& rng) {
  FlowDraw d;
  d.t = rng.uniform();
  const auto seed = rng.engine()();
  d.eps = frame_noise(frames, static_cast<int>(x1.rows() / frames), static_cast<int>(x1.cols()), seed);
  d.xt = interpolate(x1, d.eps, d.t);
  d.velocity = x1 - d.eps;
  return d;
}

ad::Var fm_loss(ad::Tape& tape, const DitModel& model, const Matrix& context, const Matrix& target,
                const std::vector<int>& slots, Rng& rng, FlowDraw* draw) {
  const int S = model.config.tokens_per_frame();
  FlowDraw d = draw_flow(target, static_cast<int>(target.rows() / S), rng);
  ad::Var pred = dit_forward(tape, model.params, model.config, context, d.xt, d.t, slots);
  ad::Var loss = ad::mse(pred, d.velocity);
  const double value = loss.value()(0, 0);
  if (!std::isfinite(value)) {
    std::ostringstream os;
    os << "flow-matching loss is not finite (t=" << d.t << ", |context|=" << context.norm()
       << ", |target|=" << target.norm() << ")";
    throw DivergenceError(os.str());
  }
  if (draw) *draw = std::move(d);
  return loss;
}

Matrix euler_integrate(const VelocityField& v, Matrix x, const SamplerConfig& sampler) {
  sampler.validate();
  const double dt = 1.0 / sampler.n_steps;
  for (int i = 0; i < sampler.n_steps; ++i) {
    x += dt * v(x, i * dt);
    if (!x.allFinite()) throw DivergenceError("sampler state became non-finite at step " + std::to_string(i));
  }
  return x;
}

Matrix sample(const DitModel& model, const Matrix& context, const std::vector<int>& slots, int n_target,
              std::uint64_t seed, const SamplerConfig& sampler) {
  const auto& c = model.config;
  Matrix x = frame_noise(n_target, c.tokens_per_frame(), c.latent_channels, seed);
  return euler_integrate([&](const Matrix& xt, double t) { return predict_velocity(model, context, xt, t, slots); },
                         std::move(x), sampler);
}

}  // namespace flowcast
