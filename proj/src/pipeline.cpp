#include "flowcast/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>

#include <spdlog/spdlog.h>

#include "flowcast/errors.hpp"
#include "flowcast/text_util.hpp"

namespace flowcast {

DataSplit generate_split(const RunConfig& config) {
  const FieldSequence all = generate(config.data);
  const int per_year = kTimestampSlots / config.data.step_hours;
  const int n_train = config.train_years * per_year;
  return {all.slice(0, n_train), all.slice(n_train, all.n_steps - n_train)};
}

Codec fit_codec(const RunConfig& config, const FieldSequence& train, std::vector<double>* losses) {
  auto res = train_codec(train, config.codec, config.codec_train);
  fit_latent_stats(res.codec, encode_sequence(res.codec, train));
  if (losses) *losses = std::move(res.losses);
  return std::move(res.codec);
}

namespace {

LatentSequence model_latents(const Codec& codec, const FieldSequence& data) {
  return to_model_space(codec, encode_sequence(codec, data));
}

}  // namespace

TrainLog continue_training(const RunConfig& config, const Codec& codec, DitModel& model, Adam& adam,
                           const FieldSequence& train, const FieldSequence* eval, const StepCallback& on_step) {
  const auto lt = model_latents(codec, train);
  if (eval) {
    const auto le = model_latents(codec, *eval);
    return train_model(model, adam, lt, config.train, &le, on_step);
  }
  return train_model(model, adam, lt, config.train, nullptr, on_step);
}

ModelRun train_dit(const RunConfig& config, const Codec& codec, const FieldSequence& train, const FieldSequence* eval,
                   const StepCallback& on_step) {
  ModelRun run{make_dit(config.dit, stream_seed(config.train.seed, SeedStream::init)), {}, {}};
  run.adam = make_optimizer(run.model, config.train);
  run.log = continue_training(config, codec, run.model, run.adam, train, eval, on_step);
  return run;
}

EvalReport evaluate_run(const RunConfig& config, const DitModel& model, const Codec& codec,
                        const FieldSequence& train, const FieldSequence& eval) {
  const auto clim = build_climatology(train, config.eval.climatology_window_days);
  EvalInputs in;
  in.model = &model;
  in.codec = &codec;
  in.data = &eval;
  in.climatology = &clim;
  in.rollout = config.rollout;
  in.rollout.horizon_days = config.eval.horizon_days;
  in.rollout.members = config.eval.members;
  in.rollout.seed = config.eval.seed;
  in.n_init_dates = config.eval.n_init_dates;
  return evaluate(in);
}

CalendarTime parse_calendar_time(const std::string& text) {
  int y = 0, mo = 0, d = 0, h = 0;
  char tail = 0;
  if (std::sscanf(text.c_str(), "y%d-%d-%dT%d%c", &y, &mo, &d, &h, &tail) == 4 ||
      (y = 0, std::sscanf(text.c_str(), "%d-%dT%d%c", &mo, &d, &h, &tail) == 3)) {
    try {
      return CalendarTime(mo, d, h, y);
    } catch (const std::exception& e) {
      throw ConfigError("bad calendar time '" + text + "': " + e.what());
    }
  }
  throw ConfigError("bad calendar time '" + text + "', expected y<year>-MM-DDTHH");
}

// ---------------------------------------------------------------------------

const std::vector<std::string>& ablation_axes() {
  static const std::vector<std::string> axes{"positional", "window", "skip", "horizon", "timestamp", "context"};
  return axes;
}

namespace {

struct Variant {
  std::string name;
  RunConfig config;
  int eval_context = 0;  // > 0 overrides the rollout context at evaluation only
};

std::vector<Variant> variants_for(const RunConfig& base, const std::string& axis) {
  std::vector<Variant> out;
  auto with = [&](std::string name, const std::function<void(RunConfig&)>& edit, int eval_context = 0) {
    RunConfig c = base;
    edit(c);
    c.resolve();
    out.push_back({std::move(name), std::move(c), eval_context});
  };
  if (axis == "positional") {
    with("rope1d+spatial2d", [](RunConfig& c) { c.dit.positional = PositionalScheme::rope1d_spatial2d; });
    with("rope3d", [](RunConfig& c) { c.dit.positional = PositionalScheme::rope3d; });
  } else if (axis == "window") {
    for (int k : {1, 2, 4, 8}) {
      with("context_" + std::to_string(k), [k](RunConfig& c) {
        c.train.context_frames = k;
        c.rollout.context_frames = k;
        c.rollout.chunk_frames = std::max(c.rollout.chunk_frames, k);
      });
    }
  } else if (axis == "skip") {
    for (int s : {1, 6, 12}) {
      with("step_" + std::to_string(s) + "h", [s](RunConfig& c) { c.data.step_hours = s; });
    }
  } else if (axis == "horizon") {
    with("vht", [](RunConfig& c) { c.train.fixed_horizon_days = 0; });
    for (int d : {1, 2, 4, 8}) {
      with("fixed_" + std::to_string(d) + "d", [d](RunConfig& c) { c.train.fixed_horizon_days = d; });
    }
  } else if (axis == "timestamp") {
    with("with_timestamps", [](RunConfig& c) { c.dit.use_timestamps = true; });
    with("without_timestamps", [](RunConfig& c) { c.dit.use_timestamps = false; });
  } else if (axis == "context") {
    // one model trained with the longest context, evaluated with shorter ones
    for (int k : {2, 4, 8}) {
      with("infer_context_" + std::to_string(k), [](RunConfig& c) {
        c.train.context_frames = 8;
        c.rollout.context_frames = 8;
        c.rollout.chunk_frames = std::max(c.rollout.chunk_frames, 8);
      }, k);
    }
  } else {
    throw ConfigError("unknown ablation axis '" + axis + "'");
  }
  return out;
}

double mean_ratio(const EvalReport& rep, const std::string& metric, const std::string& clim_metric, int lead) {
  double s = 0.0;
  for (std::size_t c = 0; c < rep.channels.size(); ++c) {
    s += rep.value(metric, static_cast<int>(c), lead) / rep.value(clim_metric, static_cast<int>(c), lead);
  }
  return s / static_cast<double>(rep.channels.size());
}

}  // namespace

AblationResult run_ablation(const RunConfig& config, const std::string& axis) {
  const auto variants = variants_for(config, axis);
  const DataSplit base = generate_split(config);
  const Codec codec = fit_codec(config, base.train);
  spdlog::info("ablate {}: {} variants, codec held-out rel rmse {:.4f}", axis, variants.size(),
               relative_reconstruction_rmse(codec, base.eval));

  AblationResult res{axis, {}};
  std::optional<ModelRun> shared;  // the context axis trains once
  for (const auto& v : variants) {
    const auto t0 = std::chrono::steady_clock::now();
    const bool regen = v.config.data.step_hours != config.data.step_hours;
    const DataSplit data = regen ? generate_split(v.config) : DataSplit{};
    const DataSplit& d = regen ? data : base;
    if (!(axis == "context" && shared)) shared = train_dit(v.config, codec, d.train, nullptr);
    RunConfig ec = v.config;
    if (v.eval_context > 0) ec.rollout.context_frames = v.eval_context;
    const EvalReport rep = evaluate_run(ec, shared->model, codec, d.train, d.eval);

    AblationRow row;
    row.axis = axis;
    row.variant = v.name;
    const auto& losses = shared->log.losses;
    const std::size_t tail = std::max<std::size_t>(1, losses.size() / 10);
    for (std::size_t i = losses.size() - std::min(tail, losses.size()); i < losses.size(); ++i) {
      row.final_loss += losses[i] / static_cast<double>(std::min(tail, losses.size()));
    }
    const int end = ec.eval.horizon_days * 24;
    row.rmse_24h = mean_ratio(rep, "rmse", "clim_rmse", 24);
    row.crps_24h = mean_ratio(rep, "crps", "clim_crps", 24);
    row.rmse_end = mean_ratio(rep, "rmse", "clim_rmse", end);
    row.crps_end = mean_ratio(rep, "crps", "clim_crps", end);
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    spdlog::info("ablate {} {}: rmse/clim@24h {:.3f} crps/clim@24h {:.3f} ({:.1f}s)", axis, v.name, row.rmse_24h,
                 row.crps_24h, row.seconds);
    res.rows.push_back(row);
  }
  return res;
}

void write_ablation(const std::filesystem::path& dir, const AblationResult& result) {
  std::filesystem::create_directories(dir);
  std::ofstream os(dir / ("ablate_" + result.axis + ".tsv"));
  os << "# scores are model / climatology, averaged over dynamic channels; lower is better\n"
     << "axis\tvariant\tfinal_train_loss\trmse_ratio_24h\tcrps_ratio_24h\trmse_ratio_end\tcrps_ratio_end\tseconds\n";
  for (const auto& r : result.rows) {
    os << r.axis << '\t' << r.variant << '\t' << format_double(r.final_loss) << '\t' << format_double(r.rmse_24h)
       << '\t' << format_double(r.crps_24h) << '\t' << format_double(r.rmse_end) << '\t'
       << format_double(r.crps_end) << '\t' << format_double(r.seconds) << '\n';
  }
  if (!os) throw FormatError(FormatErrorKind::io, "cannot write ablation table");
}

}  // namespace flowcast
