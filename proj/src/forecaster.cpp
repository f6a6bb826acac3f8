#include "flowcast/forecaster.hpp"

#include <cmath>
#include <string>

#include <spdlog/spdlog.h>

#include "flowcast/errors.hpp"

namespace flowcast {

void TrainConfig::validate() const {
  if (context_frames < 1) throw ConfigError("train.context_frames must be >= 1");
  if (fixed_horizon_days < 0) throw ConfigError("train.fixed_horizon_days must be >= 0");
  if (fixed_horizon_days == 0 && (horizon_days_min < 1 || horizon_days_max < horizon_days_min)) {
    throw ConfigError("train horizon range must satisfy 1 <= min <= max");
  }
  if (steps < 0 || batch < 1) throw ConfigError("train.steps must be >= 0 and train.batch >= 1");
  if (!(lr > 0.0) || warmup_steps < 0 || min_lr_fraction < 0.0 || min_lr_fraction > 1.0 || grad_clip < 0.0) {
    throw ConfigError("bad train learning-rate schedule");
  }
  if (val_every < 0 || val_windows < 1 || log_every < 0) throw ConfigError("bad train logging settings");
}

void RolloutConfig::validate() const {
  if (chunk_frames < 1) throw ConfigError("rollout.chunk_frames must be >= 1");
  if (horizon_days < 1 || horizon_days > 30) throw ConfigError("rollout.horizon_days must be in 1..30");
  if (members < 1) throw ConfigError("rollout.members must be >= 1");
  if (context_frames < 1) throw ConfigError("rollout.context_frames must be >= 1");
  sampler.validate();
}

int frames_per_day(int step_hours) {
  if (step_hours < 1 || 24 % step_hours != 0) throw ConfigError("step_hours must divide 24");
  return 24 / step_hours;
}

Matrix stack_frames(const LatentSequence& seq, int first, int count) {
  if (first < 0 || count < 0 || first + count > seq.n_steps()) throw DataError("frame range outside sequence");
  const int S = seq.tokens();
  Matrix out(static_cast<Eigen::Index>(count) * S, seq.c_z);
  for (int f = 0; f < count; ++f) out.middleRows(static_cast<Eigen::Index>(f) * S, S) = seq.frames[first + f];
  return out;
}

std::vector<int> frame_slots(const LatentSequence& seq, int first, int count) {
  std::vector<int> slots(count);
  for (int f = 0; f < count; ++f) slots[f] = seq.time_at(first + f).slot();
  return slots;
}

int draw_horizon_days(const TrainConfig& config, Rng& rng) {
  if (config.fixed_horizon_days > 0) return config.fixed_horizon_days;
  return rng.uniform_int(config.horizon_days_min, config.horizon_days_max);
}

TrainingWindow sample_training_window(const LatentSequence& data, int context_frames, int target_frames, Rng& rng) {
  const int lo = context_frames - 1;
  const int hi = data.n_steps() - target_frames - 1;
  if (context_frames < 1 || target_frames < 1 || hi < lo) {
    throw DataError("sequence of " + std::to_string(data.n_steps()) + " frames is too short for a window of " +
                    std::to_string(context_frames) + "+" + std::to_string(target_frames));
  }
  TrainingWindow w;
  w.anchor = rng.uniform_int(lo, hi);
  const int first = w.anchor - context_frames + 1;
  w.context = stack_frames(data, first, context_frames);
  w.target = stack_frames(data, w.anchor + 1, target_frames);
  w.slots = frame_slots(data, first, context_frames + target_frames);
  return w;
}

Adam make_optimizer(DitModel& model, const TrainConfig& config) {
  AdamConfig ac;
  ac.lr = config.lr;
  ac.warmup_steps = config.warmup_steps;
  ac.total_steps = config.steps;
  ac.min_lr_fraction = config.min_lr_fraction;
  ac.grad_clip = config.grad_clip;
  ac.weight_decay = config.weight_decay;
  return Adam(model.params, ac);
}

namespace {

void check_compatible(const DitModel& model, const LatentSequence& data) {
  const auto& c = model.config;
  if (data.c_z != c.latent_channels || data.h != c.lat_tokens || data.w != c.lon_tokens) {
    throw DataError("latent shape does not match the model");
  }
}

// Fixed windows and noise so validation numbers are comparable across steps.
double validation_loss(const DitModel& model, const LatentSequence& val, const TrainConfig& config) {
  Rng wrng(stream_seed(config.seed ^ 0x5a5a5a5aull, SeedStream::window));
  Rng nrng(stream_seed(config.seed ^ 0x5a5a5a5aull, SeedStream::noise));
  const int fpd = frames_per_day(val.step_hours);
  double total = 0.0;
  for (int i = 0; i < config.val_windows; ++i) {
    const int days = draw_horizon_days(config, wrng);
    const auto w = sample_training_window(val, config.context_frames, days * fpd, wrng);
    ad::Tape tape(false);
    total += fm_loss(tape, model, w.context, w.target, w.slots, nrng).value()(0, 0);
  }
  return total / config.val_windows;
}

}  // namespace

TrainLog train_model(DitModel& model, Adam& adam, const LatentSequence& data, const TrainConfig& config,
                     const LatentSequence* val, const StepCallback& on_step) {
  config.validate();
  check_compatible(model, data);
  if (val) check_compatible(model, *val);
  const auto& mc = model.config;
  if (config.context_frames > mc.max_context_frames) throw ConfigError("train.context_frames exceeds the model");
  const int fpd = frames_per_day(data.step_hours);
  const int longest = config.fixed_horizon_days > 0 ? config.fixed_horizon_days : config.horizon_days_max;
  if (longest * fpd > mc.max_target_frames) throw ConfigError("training horizon exceeds the model's target frames");

  // Continue the streams where a resumed optimizer left off.
  Rng wrng(derive_seed(stream_seed(config.seed, SeedStream::window), adam.steps_taken()));
  Rng nrng(derive_seed(stream_seed(config.seed, SeedStream::noise), adam.steps_taken()));
  TrainLog log;
  const double inv_batch = 1.0 / config.batch;
  for (int step = 0; step < config.steps; ++step) {
    model.params.zero_grad();
    const int days = draw_horizon_days(config, wrng);
    double loss_sum = 0.0;
    for (int b = 0; b < config.batch; ++b) {
      const auto w = sample_training_window(data, config.context_frames, days * fpd, wrng);
      ad::Tape tape;
      ad::Var loss = ad::scale(fm_loss(tape, model, w.context, w.target, w.slots, nrng), inv_batch);
      loss_sum += loss.value()(0, 0);
      tape.backward(loss);
    }
    const auto [lr, gnorm] = adam.step(model.params);
    log.losses.push_back(loss_sum);
    log.horizons.push_back(days);
    if (config.log_every > 0 && (step % config.log_every == 0 || step + 1 == config.steps)) {
      spdlog::info("train step {} loss {:.5f} horizon {}d lr {:.2e} |g| {:.3f}", adam.steps_taken(), loss_sum, days,
                   lr, gnorm);
    }
    if (val && config.val_every > 0 && (step + 1) % config.val_every == 0) {
      const double vl = validation_loss(model, *val, config);
      log.val_losses.emplace_back(step + 1, vl);
      spdlog::info("validation step {} loss {:.5f}", adam.steps_taken(), vl);
    }
    if (on_step) on_step(step, loss_sum, model);
  }
  return log;
}

LatentSequence rollout(const DitModel& model, const LatentSequence& context, const RolloutConfig& config,
                       std::uint64_t seed, RolloutTrace* trace) {
  config.validate();
  check_compatible(model, context);
  const auto& mc = model.config;
  const int K = config.context_frames;
  if (context.n_steps() < K) throw DataError("rollout needs at least " + std::to_string(K) + " context frames");
  if (K > mc.max_context_frames || config.chunk_frames > mc.max_target_frames) {
    throw ConfigError("rollout window exceeds the model's frame maxima");
  }
  const int total = frames_per_day(context.step_hours) * config.horizon_days;

  // Working sequence: the context followed by everything generated so far.
  LatentSequence work = context.slice(context.n_steps() - K, K);
  const int S = work.tokens();
  for (int pass = 0; work.n_steps() - K < total; ++pass) {
    const int first = work.n_steps() - K;
    Matrix ctx = stack_frames(work, first, K);
    const auto slots = frame_slots(work, first, K + config.chunk_frames);
    Matrix out = sample(model, ctx, slots, config.chunk_frames, derive_seed(seed, pass), config.sampler);
    for (int f = 0; f < config.chunk_frames; ++f) {
      work.frames.push_back(out.middleRows(static_cast<Eigen::Index>(f) * S, S));
    }
    if (trace) {
      trace->chunk_contexts.push_back(std::move(ctx));
      trace->chunk_outputs.push_back(std::move(out));
    }
  }
  return work.slice(K, total);
}

std::uint64_t member_seed(std::uint64_t base_seed, int member) {
  return derive_seed(stream_seed(base_seed, SeedStream::member), static_cast<std::uint64_t>(member));
}

EnsembleForecast ensemble_forecast(const DitModel& model, const LatentSequence& context, const RolloutConfig& config) {
  config.validate();
  if (context.n_steps() < 1) throw DataError("empty context");
  EnsembleForecast fc;
  fc.init_time = context.time_at(context.n_steps() - 1);
  for (int m = 0; m < config.members; ++m) {
    fc.seeds.push_back(member_seed(config.seed, m));
    fc.members.push_back(rollout(model, context, config, fc.seeds.back()));
    spdlog::debug("member {} done", m);
  }
  return fc;
}

}  // namespace flowcast
