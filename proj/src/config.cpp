#include "flowcast/config.hpp"

#include <algorithm>
#include <fstream>
#include <functional>

#include "flowcast/errors.hpp"
#include "flowcast/text_util.hpp"

namespace flowcast {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

void EvalConfig::validate() const {
  if (n_init_dates < 1) throw ConfigError("eval.n_init_dates must be >= 1");
  if (horizon_days < 1 || horizon_days > 30) throw ConfigError("eval.horizon_days must be in 1..30");
  if (members < 1 || event_members < 1) throw ConfigError("eval member counts must be >= 1");
  if (climatology_window_days < 0) throw ConfigError("eval.climatology_window_days must be >= 0");
}

RunConfig::RunConfig() {
  data.n_years = train_years + eval_years;
  resolve();
}

void RunConfig::resolve() {
  if (train_years < 1 || eval_years < 1) throw ConfigError("train_years and eval_years must be >= 1");
  data.n_years = train_years + eval_years;
  data.validate();
  codec.channels = data.n_channels + 1;
  codec.validate();
  if (data.grid.n_lat % codec.patch != 0 || data.grid.n_lon % codec.patch != 0) {
    throw ConfigError("grid must be divisible by codec.patch");
  }
  dit.latent_channels = codec.latent_channels;
  dit.lat_tokens = data.grid.n_lat / codec.patch;
  dit.lon_tokens = data.grid.n_lon / codec.patch;
  if (24 % data.step_hours != 0) throw ConfigError("data.step_hours must divide 24");
  const int fpd = frames_per_day(data.step_hours);
  const int longest = train.fixed_horizon_days > 0 ? train.fixed_horizon_days : train.horizon_days_max;
  dit.max_context_frames = std::max(train.context_frames, rollout.context_frames);
  dit.max_target_frames = std::max(longest * fpd, rollout.chunk_frames);
  dit.validate();
  train.validate();
  rollout.validate();
  eval.validate();
  if (rollout.context_frames > rollout.chunk_frames) throw ConfigError("rollout.context_frames exceeds chunk_frames");
  if (eval.event_channel < 0 || eval.event_channel >= data.n_channels) throw ConfigError("eval.event_channel out of range");
}

namespace {

struct Field {
  std::string key;
  std::function<json(const RunConfig&)> get;
  std::function<void(RunConfig&, const json&)> set;
};

template <class Access>
Field field(std::string key, Access access) {
  using T = std::remove_cvref_t<decltype(access(std::declval<RunConfig&>()))>;
  return Field{key,
               [access](const RunConfig& c) { return json(access(const_cast<RunConfig&>(c))); },
               [access, key](RunConfig& c, const json& v) {
                 try {
                   access(c) = v.get<T>();
                 } catch (const json::exception& e) {
                   throw ConfigError("bad value for " + key + ": " + e.what());
                 }
               }};
}

template <class Enum>
Field enum_field(std::string key, std::function<Enum&(RunConfig&)> access, std::string (*show)(Enum),
                 Enum (*parse)(const std::string&)) {
  return Field{key, [access, show](const RunConfig& c) { return json(show(access(const_cast<RunConfig&>(c)))); },
               [access, parse, key](RunConfig& c, const json& v) {
                 if (!v.is_string()) throw ConfigError("bad value for " + key + ": expected a string");
                 access(c) = parse(v.get<std::string>());
               }};
}

json event_to_json(const InjectedEvent& e) {
  return json{{"month", e.onset.month()}, {"day", e.onset.day()},      {"hour", e.onset.hour()},
              {"year", e.onset.year()},   {"lat_deg", e.lat_deg},      {"lon_deg", e.lon_deg},
              {"amplitude", e.amplitude}, {"radius_deg", e.radius_deg}, {"ramp_hours", e.ramp_hours},
              {"plateau_hours", e.plateau_hours}, {"decay_hours", e.decay_hours}};
}

InjectedEvent event_from_json(const json& j) {
  static const std::vector<std::string> known{"month",      "day",        "hour",       "year",
                                              "lat_deg",    "lon_deg",    "amplitude",  "radius_deg",
                                              "ramp_hours", "plateau_hours", "decay_hours"};
  if (!j.is_object()) throw ConfigError("data.injected entries must be objects");
  for (const auto& [k, v] : j.items()) {
    if (std::find(known.begin(), known.end(), k) == known.end()) throw ConfigError("unknown key data.injected[]." + k);
  }
  InjectedEvent e;
  try {
    e.onset = CalendarTime(j.value("month", 1), j.value("day", 1), j.value("hour", 0), j.value("year", 0));
    e.lat_deg = j.value("lat_deg", e.lat_deg);
    e.lon_deg = j.value("lon_deg", e.lon_deg);
    e.amplitude = j.value("amplitude", e.amplitude);
    e.radius_deg = j.value("radius_deg", e.radius_deg);
    e.ramp_hours = j.value("ramp_hours", e.ramp_hours);
    e.plateau_hours = j.value("plateau_hours", e.plateau_hours);
    e.decay_hours = j.value("decay_hours", e.decay_hours);
  } catch (const json::exception& ex) {
    throw ConfigError(std::string("bad data.injected entry: ") + ex.what());
  } catch (const std::invalid_argument& ex) {
    throw ConfigError(std::string("bad data.injected entry: ") + ex.what());
  }
  return e;
}

std::string show_positional(PositionalScheme s) { return to_string(s); }
std::string show_xattn(CrossAttnKv k) { return to_string(k); }

const std::vector<Field>& registry() {
  static const std::vector<Field> fields = [] {
    std::vector<Field> f;
#define FC_FIELD(key, expr) f.push_back(field(key, [](RunConfig& c) -> auto& { return expr; }))
    FC_FIELD("data.seed", c.data.seed);
    FC_FIELD("data.start_year", c.data.start_year);
    FC_FIELD("data.train_years", c.train_years);
    FC_FIELD("data.eval_years", c.eval_years);
    FC_FIELD("data.grid.n_lat", c.data.grid.n_lat);
    FC_FIELD("data.grid.n_lon", c.data.grid.n_lon);
    FC_FIELD("data.grid.lat_start_deg", c.data.grid.lat_start_deg);
    FC_FIELD("data.grid.lat_step_deg", c.data.grid.lat_step_deg);
    FC_FIELD("data.grid.lon_step_deg", c.data.grid.lon_step_deg);
    FC_FIELD("data.n_channels", c.data.n_channels);
    FC_FIELD("data.step_hours", c.data.step_hours);
    FC_FIELD("data.channel_offset", c.data.channel_offset);
    FC_FIELD("data.channel_scale", c.data.channel_scale);
    FC_FIELD("data.meridional_amp", c.data.meridional_amp);
    FC_FIELD("data.seasonal_amp", c.data.seasonal_amp);
    FC_FIELD("data.diurnal_amp", c.data.diurnal_amp);
    FC_FIELD("data.wave_amp", c.data.wave_amp);
    FC_FIELD("data.chaos_amp", c.data.chaos_amp);
    FC_FIELD("data.wave_numbers", c.data.wave_numbers);
    FC_FIELD("data.wave_speeds", c.data.wave_speeds);
    FC_FIELD("data.lorenz_forcing", c.data.lorenz_forcing);
    FC_FIELD("data.lorenz_sites", c.data.lorenz_sites);
    FC_FIELD("data.lorenz_bands", c.data.lorenz_bands);
    FC_FIELD("data.lorenz_mtu_per_day", c.data.lorenz_mtu_per_day);
    FC_FIELD("data.lorenz_substeps_per_hour", c.data.lorenz_substeps_per_hour);
    FC_FIELD("data.lorenz_spinup_mtu", c.data.lorenz_spinup_mtu);
    FC_FIELD("data.noise_amp", c.data.noise_amp);
    FC_FIELD("data.event_rate_per_day", c.data.event_rate_per_day);
    FC_FIELD("data.event_amp", c.data.event_amp);
    FC_FIELD("data.event_radius_deg", c.data.event_radius_deg);
    FC_FIELD("data.event_channel_weight", c.data.event_channel_weight);

    FC_FIELD("codec.patch", c.codec.patch);
    FC_FIELD("codec.latent_channels", c.codec.latent_channels);
    FC_FIELD("codec.hidden", c.codec.hidden);
    FC_FIELD("codec.train.steps", c.codec_train.steps);
    FC_FIELD("codec.train.batch", c.codec_train.batch);
    FC_FIELD("codec.train.lr", c.codec_train.lr);
    FC_FIELD("codec.train.seed", c.codec_train.seed);

    FC_FIELD("dit.d_model", c.dit.d_model);
    FC_FIELD("dit.n_heads", c.dit.n_heads);
    FC_FIELD("dit.n_blocks", c.dit.n_blocks);
    FC_FIELD("dit.mlp_ratio", c.dit.mlp_ratio);
    FC_FIELD("dit.lora_rank", c.dit.lora_rank);
    FC_FIELD("dit.timestamp_dim", c.dit.timestamp_dim);
    FC_FIELD("dit.time_embed_dim", c.dit.time_embed_dim);
    FC_FIELD("dit.use_timestamps", c.dit.use_timestamps);
    FC_FIELD("dit.rope_base", c.dit.rope_base);
    FC_FIELD("dit.rope_axis_split", c.dit.rope_axis_split);
    FC_FIELD("dit.init_std", c.dit.init_std);

    FC_FIELD("train.context_frames", c.train.context_frames);
    FC_FIELD("train.horizon_days_min", c.train.horizon_days_min);
    FC_FIELD("train.horizon_days_max", c.train.horizon_days_max);
    FC_FIELD("train.fixed_horizon_days", c.train.fixed_horizon_days);
    FC_FIELD("train.steps", c.train.steps);
    FC_FIELD("train.batch", c.train.batch);
    FC_FIELD("train.lr", c.train.lr);
    FC_FIELD("train.warmup_steps", c.train.warmup_steps);
    FC_FIELD("train.min_lr_fraction", c.train.min_lr_fraction);
    FC_FIELD("train.grad_clip", c.train.grad_clip);
    FC_FIELD("train.weight_decay", c.train.weight_decay);
    FC_FIELD("train.seed", c.train.seed);
    FC_FIELD("train.log_every", c.train.log_every);
    FC_FIELD("train.val_every", c.train.val_every);
    FC_FIELD("train.val_windows", c.train.val_windows);

    FC_FIELD("rollout.chunk_frames", c.rollout.chunk_frames);
    FC_FIELD("rollout.horizon_days", c.rollout.horizon_days);
    FC_FIELD("rollout.members", c.rollout.members);
    FC_FIELD("rollout.context_frames", c.rollout.context_frames);
    FC_FIELD("rollout.seed", c.rollout.seed);
    FC_FIELD("rollout.sampler_steps", c.rollout.sampler.n_steps);

    FC_FIELD("eval.n_init_dates", c.eval.n_init_dates);
    FC_FIELD("eval.horizon_days", c.eval.horizon_days);
    FC_FIELD("eval.members", c.eval.members);
    FC_FIELD("eval.climatology_window_days", c.eval.climatology_window_days);
    FC_FIELD("eval.seed", c.eval.seed);
    FC_FIELD("eval.event_lat_lo", c.eval.event_lat_lo);
    FC_FIELD("eval.event_lat_hi", c.eval.event_lat_hi);
    FC_FIELD("eval.event_lon_lo", c.eval.event_lon_lo);
    FC_FIELD("eval.event_lon_hi", c.eval.event_lon_hi);
    FC_FIELD("eval.event_channel", c.eval.event_channel);
    FC_FIELD("eval.event_members", c.eval.event_members);
#undef FC_FIELD
    f.push_back(enum_field<PositionalScheme>(
        "dit.positional", [](RunConfig& c) -> PositionalScheme& { return c.dit.positional; }, show_positional,
        parse_positional));
    f.push_back(enum_field<CrossAttnKv>(
        "dit.xattn_kv", [](RunConfig& c) -> CrossAttnKv& { return c.dit.xattn_kv; }, show_xattn, parse_xattn_kv));
    f.push_back(Field{"data.injected",
                      [](const RunConfig& c) {
                        json arr = json::array();
                        for (const auto& e : c.data.injected) arr.push_back(event_to_json(e));
                        return arr;
                      },
                      [](RunConfig& c, const json& v) {
                        if (!v.is_array()) throw ConfigError("data.injected must be an array");
                        c.data.injected.clear();
                        for (const auto& e : v) c.data.injected.push_back(event_from_json(e));
                      }});
    return f;
  }();
  return fields;
}

}  // namespace

ojson to_flat_json(const RunConfig& config) {
  ojson out = ojson::object();
  for (const Field& f : registry()) out[f.key] = f.get(config);
  return out;
}

void apply_flat_json(RunConfig& config, const json& flat) {
  if (!flat.is_object()) throw ConfigError("config must be a JSON object of dotted keys");
  for (const auto& [key, value] : flat.items()) {
    const auto& reg = registry();
    auto it = std::find_if(reg.begin(), reg.end(), [&](const Field& f) { return f.key == key; });
    if (it == reg.end()) throw ConfigError("unknown config key '" + key + "'");
    it->set(config, value);
  }
  config.resolve();
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  RunConfig c;
  apply_flat_json(c, j);
  return c;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const Field& f : registry()) keys.push_back(f.key);
  return keys;
}

ojson section_json(const RunConfig& config, const std::string& prefix) {
  ojson out = ojson::object();
  for (const Field& f : registry()) {
    if (f.key.starts_with(prefix)) out[f.key] = f.get(config);
  }
  return out;
}

}  // namespace flowcast
