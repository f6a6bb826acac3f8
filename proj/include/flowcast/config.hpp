#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "flowcast/codec.hpp"
#include "flowcast/dit.hpp"
#include "flowcast/forecaster.hpp"
#include "flowcast/synthetic.hpp"

namespace flowcast {

struct EvalConfig {
  int n_init_dates = 16;
  int horizon_days = 30;
  int members = 20;
  int climatology_window_days = 7;
  std::uint64_t seed = 99;
  // event-probability box and threshold band (anomaly in channel-scale units)
  double event_lat_lo = 55.0;
  double event_lat_hi = 58.0;
  double event_lon_lo = 35.0;
  double event_lon_hi = 39.0;
  int event_channel = 0;
  int event_members = 50;

  void validate() const;
};

/// Everything a run needs. Several DiT / codec fields are derived from the
/// data section by resolve() and are not config keys.
struct RunConfig {
  AtmosphereParams data;
  int train_years = 3;
  int eval_years = 1;
  CodecConfig codec;
  CodecTrainConfig codec_train;
  DitConfig dit;
  TrainConfig train;
  RolloutConfig rollout;
  EvalConfig eval;

  RunConfig();
  /// Fills derived fields (channel counts, latent shape, frame maxima) and
  /// validates cross-section constraints. Throws ConfigError.
  void resolve();
};

/// Flat JSON object with dotted keys, every key present.
nlohmann::ordered_json to_flat_json(const RunConfig& config);
/// Applies the keys of a flat JSON object over `config`; unknown keys and
/// wrong value types raise ConfigError.
void apply_flat_json(RunConfig& config, const nlohmann::json& flat);
RunConfig load_run_config(const std::filesystem::path& path);
std::vector<std::string> config_keys();

/// Subsets of the flat form keyed by section prefix, used in checkpoints.
nlohmann::ordered_json section_json(const RunConfig& config, const std::string& prefix);

}  // namespace flowcast
