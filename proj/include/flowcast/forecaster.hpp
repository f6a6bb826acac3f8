#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "flowcast/codec.hpp"
#include "flowcast/dit.hpp"
#include "flowcast/flow.hpp"

namespace flowcast {

struct TrainConfig {
  int context_frames = 4;
  int horizon_days_min = 1;
  int horizon_days_max = 8;
  int fixed_horizon_days = 0;  // > 0 replaces the variable horizon draw
  int steps = 2000;
  int batch = 4;
  double lr = 1e-3;
  int warmup_steps = 100;
  double min_lr_fraction = 0.1;
  double grad_clip = 1.0;
  double weight_decay = 0.0;
  std::uint64_t seed = 1;
  int log_every = 100;
  int val_every = 0;
  int val_windows = 8;

  void validate() const;
};

struct RolloutConfig {
  int chunk_frames = 16;
  int horizon_days = 30;
  int members = 20;
  int context_frames = 4;
  std::uint64_t seed = 2024;
  SamplerConfig sampler;

  void validate() const;
};

int frames_per_day(int step_hours);

struct TrainingWindow {
  int anchor = 0;  // index of the last context frame
  Matrix context;  // [K * S, c_z]
  Matrix target;   // [N * S, c_z]
  std::vector<int> slots;  // K + N timestamp indices
};

/// Concatenates frames [first, first + count) row-wise.
Matrix stack_frames(const LatentSequence& seq, int first, int count);
std::vector<int> frame_slots(const LatentSequence& seq, int first, int count);

/// Horizon in days for one batch: fixed, or uniform on [min, max].
int draw_horizon_days(const TrainConfig& config, Rng& rng);

/// Anchor uniform over every index that leaves room for `context_frames`
/// before and `target_frames` after it.
TrainingWindow sample_training_window(const LatentSequence& data, int context_frames, int target_frames, Rng& rng);

struct TrainLog {
  std::vector<double> losses;         // mean loss per step
  std::vector<int> horizons;          // horizon days per step
  std::vector<std::pair<int, double>> val_losses;
};

using StepCallback = std::function<void(int step, double loss, const DitModel& model)>;

/// Variable-horizon flow-matching training with Adam. `data` (and `val`)
/// are latents in model space. Throws DivergenceError on a non-finite loss
/// or gradient.
TrainLog train_model(DitModel& model, Adam& adam, const LatentSequence& data, const TrainConfig& config,
                     const LatentSequence* val = nullptr, const StepCallback& on_step = {});

Adam make_optimizer(DitModel& model, const TrainConfig& config);

struct RolloutTrace {
  std::vector<Matrix> chunk_contexts;  // context used by each pass
  std::vector<Matrix> chunk_outputs;   // full sampled chunk of each pass
};

/// Autoregressive rollout of one member. `context` holds the most recent
/// frames in model space (at least config.context_frames); the first output
/// frame is one step after `context`'s last frame.
LatentSequence rollout(const DitModel& model, const LatentSequence& context, const RolloutConfig& config,
                       std::uint64_t member_seed, RolloutTrace* trace = nullptr);

std::uint64_t member_seed(std::uint64_t base_seed, int member);

struct EnsembleForecast {
  CalendarTime init_time;  // time of the last context frame
  std::vector<std::uint64_t> seeds;
  std::vector<LatentSequence> members;  // model-space latents

  int lead_frames() const { return members.empty() ? 0 : members.front().n_steps(); }
};

EnsembleForecast ensemble_forecast(const DitModel& model, const LatentSequence& context, const RolloutConfig& config);

}  // namespace flowcast
