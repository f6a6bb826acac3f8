#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "flowcast/checkpoint.hpp"
#include "flowcast/config.hpp"
#include "flowcast/metrics.hpp"

namespace flowcast {

struct DataSplit {
  FieldSequence train;
  FieldSequence eval;
};

/// Generates train_years + eval_years and splits at the year boundary.
DataSplit generate_split(const RunConfig& config);

/// Trains the codec on `train` and fits its latent statistics.
Codec fit_codec(const RunConfig& config, const FieldSequence& train, std::vector<double>* losses = nullptr);

struct ModelRun {
  DitModel model;
  Adam adam;
  TrainLog log;
};

/// Encodes both splits and runs variable-horizon training. `on_step` sees
/// every optimizer step (used for periodic checkpoints).
ModelRun train_dit(const RunConfig& config, const Codec& codec, const FieldSequence& train,
                   const FieldSequence* eval, const StepCallback& on_step = {});
/// Continues training an existing model / optimizer pair.
TrainLog continue_training(const RunConfig& config, const Codec& codec, DitModel& model, Adam& adam,
                           const FieldSequence& train, const FieldSequence* eval, const StepCallback& on_step = {});

/// Ensemble evaluation against truth and the training climatology, using
/// the eval section of the config.
EvalReport evaluate_run(const RunConfig& config, const DitModel& model, const Codec& codec,
                        const FieldSequence& train, const FieldSequence& eval);

/// Parses "y<year>-MM-DDTHH" (the CalendarTime::to_string form) or
/// "MM-DDTHH" (year 0).
CalendarTime parse_calendar_time(const std::string& text);

// Ablations ------------------------------------------------------------------

const std::vector<std::string>& ablation_axes();

struct AblationRow {
  std::string axis;
  std::string variant;
  double final_loss = 0.0;     // mean of the last 10% of training losses
  double rmse_24h = 0.0;       // mean over dynamic channels, physical units / climatology
  double crps_24h = 0.0;       // same normalization
  double rmse_end = 0.0;       // at the last evaluated lead
  double crps_end = 0.0;
  double seconds = 0.0;
};

struct AblationResult {
  std::string axis;
  std::vector<AblationRow> rows;
};

/// Runs every variant of one axis on `config` (meant to be a reduced
/// config). Data and the codec are shared across variants; only the data
/// step axis regenerates data, with the same seed.
AblationResult run_ablation(const RunConfig& config, const std::string& axis);
void write_ablation(const std::filesystem::path& dir, const AblationResult& result);

}  // namespace flowcast
