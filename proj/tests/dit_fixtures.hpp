#pragma once

#include <cmath>
#include <set>

#include "flowcast/dit.hpp"
#include "flowcast/rng.hpp"
#include "test_util.hpp"

// 2 blocks, d_model 16, 3x3 latent grid: small enough for finite differences.
inline flowcast::DitConfig tiny_dit_config() {
  flowcast::DitConfig c;
  c.d_model = 16;
  c.n_heads = 2;
  c.n_blocks = 2;
  c.mlp_ratio = 2;
  c.lora_rank = 2;
  c.timestamp_dim = 6;
  c.time_embed_dim = 8;
  c.max_context_frames = 2;
  c.max_target_frames = 2;
  c.latent_channels = 3;
  c.lat_tokens = 3;
  c.lon_tokens = 3;
  return c;
}

// Overwrites every array (zero-init ones included) so no gradient vanishes
// structurally.
inline void randomize_all(flowcast::ParameterStore& store, std::uint64_t seed, double sd = 0.3) {
  flowcast::Rng rng(seed);
  for (flowcast::Parameter* p : store.all()) {
    for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] = sd * rng.normal();
  }
}

inline flowcast::Matrix random_matrix(int r, int c, std::uint64_t seed) {
  flowcast::Rng rng(seed);
  flowcast::Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

struct DitGradientCase {
  double worst = 0.0;
  double max_abs = 0.0;
  double max_grad = 0.0;
  std::size_t entries = 0;
  std::size_t probed_params = 0;
};

// Relative error of every named parameter gradient against central
// differences for an MSE loss. Only the looked-up rows of the timestamp
// table (plus two unused rows) are probed.
inline DitGradientCase dit_gradient_check(flowcast::DitConfig config, std::uint64_t seed) {
  using namespace flowcast;
  DitModel m = make_dit(config, seed);
  randomize_all(m.params, seed + 1);
  const int S = config.tokens_per_frame();
  const int K = config.max_context_frames, N = config.max_target_frames;
  const Matrix context = random_matrix(K * S, config.latent_channels, seed + 2);
  const Matrix noisy = random_matrix(N * S, config.latent_channels, seed + 3);
  const Matrix target = random_matrix(N * S, config.latent_channels, seed + 4);
  std::vector<int> slots;
  for (int f = 0; f < K + N; ++f) slots.push_back(1400 + 6 * f);
  EntryPicker pick = [&](const Parameter& p) {
    std::vector<Eigen::Index> idx;
    if (p.name != "ts.table") {
      for (Eigen::Index i = 0; i < p.value.size(); ++i) idx.push_back(i);
      return idx;
    }
    std::set<int> rows(slots.begin(), slots.end());
    rows.insert(0);
    rows.insert(8783);
    for (int r : rows) {
      for (Eigen::Index c = 0; c < p.value.cols(); ++c) idx.push_back(r * p.value.cols() + c);
    }
    return idx;
  };
  DitGradientCase out;
  out.probed_params = m.params.count();
  const auto g = gradient_check(
      m.params,
      [&](ad::Tape& t) { return ad::mse(dit_forward(t, m.params, config, context, noisy, 0.37, slots), target); },
      1e-6, 1e-8, pick);
  out.worst = g.worst;
  out.max_abs = g.max_abs;
  out.max_grad = g.max_grad;
  out.entries = g.entries;
  return out;
}
