// flowcast command line: data generation, codec and model training,
// forecasting, evaluation and ablation sweeps.

#include <cstdlib>
#include <fstream>
#include <iostream>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "flowcast/errors.hpp"
#include "flowcast/pipeline.hpp"
#include "flowcast/text_util.hpp"

using namespace flowcast;
using json = nlohmann::json;

namespace {

enum ExitCode { kOk = 0, kInternal = 1, kConfig = 2, kData = 3, kDivergence = 4 };

void setup_logging() {
  auto logger = spdlog::stderr_color_st("flowcast");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%H:%M:%S] %^%l%$ %v");
  spdlog::level::level_enum level = spdlog::level::info;
  if (const char* env = std::getenv("FLOWCAST_LOG")) {
    level = spdlog::level::from_str(env);
    // from_str maps unknown names to off; keep info in that case
    if (level == spdlog::level::off && std::string(env) != "off") level = spdlog::level::info;
  }
  spdlog::set_level(level);
}

struct Options {
  std::string config_path;
  std::vector<std::string> overrides;
  bool print_config = false;
};

RunConfig resolve_config(const Options& o) {
  RunConfig c = o.config_path.empty() ? RunConfig() : load_run_config(o.config_path);
  json flat = json::object();
  for (const auto& kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + kv + "' is not key=value");
    const std::string key = kv.substr(0, eq), text = kv.substr(eq + 1);
    json v = json::parse(text, nullptr, false);
    flat[key] = v.is_discarded() ? json(text) : v;
  }
  if (!flat.empty()) apply_flat_json(c, flat);
  return c;
}

void write_json(const std::filesystem::path& path, const json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path);
  os << j.dump(2) << "\n";
  if (!os) throw FormatError(FormatErrorKind::io, "cannot write " + path.string());
}

void write_losses(const std::filesystem::path& path, const std::vector<double>& losses,
                  const std::vector<int>* horizons = nullptr, long first_step = 0) {
  std::ofstream os(path);
  os << "step\tloss" << (horizons ? "\thorizon_days" : "") << "\n";
  for (std::size_t i = 0; i < losses.size(); ++i) {
    os << first_step + static_cast<long>(i) + 1 << '\t' << format_double(losses[i]);
    if (horizons) os << '\t' << (*horizons)[i];
    os << '\n';
  }
}

Checkpoint load_with(const std::string& path, bool need_codec, bool need_model) {
  Checkpoint ck = load_checkpoint(path);
  if (need_codec && !ck.codec) throw DataError(path + " holds no codec");
  if (need_model && !ck.model) throw DataError(path + " holds no model");
  return ck;
}

int run(int argc, char** argv) {
  CLI::App app{"Latent flow-matching forecaster on synthetic gridded data"};
  app.require_subcommand(0, 1);
  Options opt;
  app.add_option("-c,--config", opt.config_path, "JSON config with dotted keys")->check(CLI::ExistingFile);
  app.add_option("-s,--set", opt.overrides, "Override one key, key=value (repeatable)");
  app.add_flag("--print-config", opt.print_config, "Print the fully resolved config and exit");

  std::string out, data_dir, codec_path, ckpt_path, init_time, axis;
  int init_index = -1, horizon = 0, members = 0, init_dates = 0, checkpoint_every = 0;
  std::uint64_t seed = 0;
  bool seed_set = false;

  auto* gen = app.add_subcommand("gen-data", "Write train.mrchk and eval.mrchk");
  gen->add_option("-o,--out", out, "Output directory")->required();

  auto* tcodec = app.add_subcommand("train-codec", "Train the patch autoencoder");
  tcodec->add_option("-d,--data", data_dir, "Directory from gen-data")->required();
  tcodec->add_option("-o,--out", out, "Checkpoint path")->required();

  auto* tmodel = app.add_subcommand("train-model", "Variable-horizon flow-matching training");
  tmodel->add_option("-d,--data", data_dir, "Directory from gen-data")->required();
  tmodel->add_option("--codec", codec_path, "Codec checkpoint")->required();
  tmodel->add_option("-o,--out", out, "Checkpoint path")->required();
  tmodel->add_option("--resume", ckpt_path, "Continue from a model checkpoint");
  tmodel->add_option("--checkpoint-every", checkpoint_every, "Steps between checkpoints (0: end only)");

  auto* fcast = app.add_subcommand("forecast", "Ensemble rollout from one init time");
  fcast->add_option("--checkpoint", ckpt_path, "Model checkpoint")->required();
  fcast->add_option("-d,--data", data_dir, "MRCHK1 file or gen-data directory (eval.mrchk)")->required();
  auto* it_opt = fcast->add_option("--init-time", init_time, "Last context frame, y<year>-MM-DDTHH");
  fcast->add_option("--init-index", init_index, "Last context frame as a frame index")->excludes(it_opt);
  fcast->add_option("--horizon-days", horizon, "Lead in days (1..30)");
  fcast->add_option("-m,--members", members, "Ensemble size");
  fcast->add_option("--seed", seed, "Base seed")->each([&](const std::string&) { seed_set = true; });
  fcast->add_option("-o,--out", out, "Output directory")->required();

  auto* evalc = app.add_subcommand("evaluate", "Metric report against truth and climatology");
  evalc->add_option("--checkpoint", ckpt_path, "Model checkpoint")->required();
  evalc->add_option("-d,--data", data_dir, "Directory from gen-data")->required();
  evalc->add_option("--init-dates", init_dates, "Number of init dates");
  evalc->add_option("--horizon-days", horizon, "Lead in days");
  evalc->add_option("-m,--members", members, "Ensemble size");
  evalc->add_option("-o,--out", out, "Report directory")->required();

  auto* abl = app.add_subcommand("ablate", "Matched sweep along one ablation axis");
  abl->add_option("--axis", axis, "Axis")->required()->check(CLI::IsMember(ablation_axes()));
  abl->add_option("-o,--out", out, "Output directory")->required();

  auto* prep = app.add_subcommand("param-report", "Parameter counts of the configured model");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  const RunConfig config = resolve_config(opt);
  if (opt.print_config || app.get_subcommands().empty()) {
    std::cout << to_flat_json(config).dump(2) << "\n";
    return kOk;
  }

  auto data_file = [&](const std::string& name) {
    const std::filesystem::path p(data_dir);
    return std::filesystem::is_directory(p) ? p / name : p;
  };

  if (gen->parsed()) {
    const auto split = generate_split(config);
    std::filesystem::create_directories(out);
    write_fields(split.train, std::filesystem::path(out) / "train.mrchk");
    write_fields(split.eval, std::filesystem::path(out) / "eval.mrchk");
    write_json(std::filesystem::path(out) / "config.json", to_flat_json(config));
    spdlog::info("wrote {} train and {} eval frames to {}", split.train.n_steps, split.eval.n_steps, out);
  } else if (tcodec->parsed()) {
    const auto train = read_fields(data_file("train.mrchk"));
    const auto eval = read_fields(data_file("eval.mrchk"));
    std::vector<double> losses;
    Checkpoint ck;
    ck.config = config;
    ck.codec = fit_codec(config, train, &losses);
    const double rel = relative_reconstruction_rmse(*ck.codec, eval);
    ck.extra["heldout_relative_rmse"] = rel;
    save_checkpoint(out, ck);
    write_losses(out + ".loss.tsv", losses);
    spdlog::info("codec held-out relative rmse {:.4f}, saved {}", rel, out);
    std::cout << "heldout_relative_rmse\t" << format_double(rel) << "\n";
  } else if (tmodel->parsed()) {
    const auto train = read_fields(data_file("train.mrchk"));
    const auto eval = read_fields(data_file("eval.mrchk"));
    Checkpoint ck = ckpt_path.empty() ? load_with(codec_path, true, false) : load_with(ckpt_path, true, true);
    ck.config = config;
    DitModel model = ck.model ? std::move(*ck.model) : make_dit(config.dit, stream_seed(config.train.seed, SeedStream::init));
    Adam adam = ck.adam ? std::move(*ck.adam) : make_optimizer(model, config.train);
    ck.model.reset();
    ck.adam.reset();
    const long first_step = adam.steps_taken();
    auto save = [&](const DitModel& m, const Adam& a) {
      Checkpoint snap;
      snap.config = config;
      snap.codec = ck.codec;
      snap.model = m;
      snap.adam = a;
      save_checkpoint(out, snap);
    };
    StepCallback cb;
    if (checkpoint_every > 0) {
      cb = [&](int step, double, const DitModel& m) {
        if ((step + 1) % checkpoint_every == 0) save(m, adam);
      };
    }
    const auto log = continue_training(config, *ck.codec, model, adam, train, &eval, cb);
    save(model, adam);
    write_losses(out + ".loss.tsv", log.losses, &log.horizons, first_step);
    spdlog::info("trained {} steps, saved {}", log.losses.size(), out);
  } else if (fcast->parsed()) {
    Checkpoint ck = load_with(ckpt_path, true, true);
    const auto data = read_fields(data_file("eval.mrchk"));
    int anchor = init_index;
    if (!init_time.empty()) {
      const auto t = parse_calendar_time(init_time);
      const auto diff = t.hours_since_epoch() - data.start.hours_since_epoch();
      if (diff % data.step_hours != 0) throw DataError("init time is not on the data's time grid");
      anchor = static_cast<int>(diff / data.step_hours);
    }
    RolloutConfig rc = ck.config.rollout;
    if (horizon > 0) rc.horizon_days = horizon;
    if (members > 0) rc.members = members;
    if (seed_set) rc.seed = seed;
    if (anchor < 0) anchor = rc.context_frames - 1;
    if (anchor - rc.context_frames + 1 < 0 || anchor >= data.n_steps) {
      throw DataError("init frame " + std::to_string(anchor) + " leaves no room for the context");
    }
    const auto ctx_pix = data.slice(anchor - rc.context_frames + 1, rc.context_frames);
    const auto ctx = to_model_space(*ck.codec, encode_sequence(*ck.codec, ctx_pix));
    const auto fc = ensemble_forecast(*ck.model, ctx, rc);
    const auto man = write_ensemble(out, fc, *ck.codec, ctx_pix);
    spdlog::info("wrote {} members x {} frames from {} to {}", fc.members.size(), fc.lead_frames(),
                 fc.init_time.to_string(), out);
  } else if (evalc->parsed()) {
    Checkpoint ck = load_with(ckpt_path, true, true);
    RunConfig ec = ck.config;
    if (init_dates > 0) ec.eval.n_init_dates = init_dates;
    if (horizon > 0) ec.eval.horizon_days = horizon;
    if (members > 0) ec.eval.members = members;
    ec.resolve();
    const auto train = read_fields(data_file("train.mrchk"));
    const auto eval = read_fields(data_file("eval.mrchk"));
    const auto rep = evaluate_run(ec, *ck.model, *ck.codec, train, eval);
    write_report(out, rep);
    spdlog::info("report with {} rows written to {}", rep.rows.size(), out);
  } else if (abl->parsed()) {
    const auto res = run_ablation(config, axis);
    write_ablation(out, res);
    std::cout << read_file_bytes(std::filesystem::path(out) / ("ablate_" + axis + ".tsv"));
  } else if (prep->parsed()) {
    std::cout << format_param_report(param_report(config.dit));
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  // One machine-parsable line per failure: "error <class>: <message>".
  try {
    return run(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "error config: " << e.what() << "\n";
    return kConfig;
  } catch (const FormatError& e) {
    std::cerr << "error format: " << e.what() << "\n";
    return kData;
  } catch (const DataError& e) {
    std::cerr << "error data: " << e.what() << "\n";
    return kData;
  } catch (const DivergenceError& e) {
    std::cerr << "error divergence: " << e.what() << "\n";
    return kDivergence;
  } catch (const std::exception& e) {
    std::cerr << "error internal: " << e.what() << "\n";
    return kInternal;
  }
}
