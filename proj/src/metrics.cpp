#include "flowcast/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <spdlog/spdlog.h>

#include "flowcast/errors.hpp"
#include "flowcast/text_util.hpp"

namespace flowcast {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_aligned(const FieldSequence& a, const FieldSequence& b) {
  if (!(a.grid == b.grid) || a.n_channels != b.n_channels || a.n_steps != b.n_steps || a.step_hours != b.step_hours) {
    throw DataError("forecast and truth shapes differ");
  }
  if (a.start != b.start) throw DataError("forecast starts " + a.start.to_string() + ", truth " + b.start.to_string());
}

// Row weights divided by the point count so a weighted sum is a weighted mean.
std::vector<double> point_weights(const GridSpec& grid) {
  auto w = latitude_weights(grid).weights;
  for (double& v : w) v /= static_cast<double>(grid.points());
  return w;
}

}  // namespace

CrpsTerms crps(std::span<const double> members, double obs) {
  const std::size_t M = members.size();
  if (M == 0) throw DataError("CRPS needs at least one member");
  CrpsTerms r;
  for (double x : members) r.skill += std::fabs(x - obs);
  r.skill /= static_cast<double>(M);
  if (M >= 2) {
    std::vector<double> s(members.begin(), members.end());
    std::sort(s.begin(), s.end());
    // sum over i < j of (x_(j) - x_(i)) from the order statistics, taken
    // relative to the minimum so identical members give exactly zero
    double pairs = 0.0;
    for (std::size_t k = 1; k < M; ++k)
      pairs += (2.0 * static_cast<double>(k) + 1.0 - static_cast<double>(M)) * (s[k] - s[0]);
    r.spread = 2.0 * pairs / (static_cast<double>(M) * static_cast<double>(M - 1));
  }
  r.crps = r.skill - 0.5 * r.spread;
  return r;
}

double weighted_mse(std::span<const float> forecast, std::span<const float> truth, const GridSpec& grid) {
  if (forecast.size() != grid.points() || truth.size() != grid.points()) throw DataError("field size mismatch");
  const auto w = point_weights(grid);
  double s = 0.0;
  for (int y = 0; y < grid.n_lat; ++y) {
    double row = 0.0;
    for (int x = 0; x < grid.n_lon; ++x) {
      const double d = static_cast<double>(forecast[y * grid.n_lon + x]) - truth[y * grid.n_lon + x];
      row += d * d;
    }
    s += w[y] * row;
  }
  return s;
}

void LeadTable::add(int lead, int channel, double v) {
  if (std::isnan(v)) return;
  const auto i = static_cast<std::size_t>(lead) * channels + channel;
  sum[i] += v;
  ++count[i];
}

double LeadTable::mean(int lead, int channel) const {
  const auto i = static_cast<std::size_t>(lead) * channels + channel;
  return count[i] ? sum[i] / count[i] : kNaN;
}

LeadTable rmse(const std::vector<FieldSequence>& forecasts, const std::vector<FieldSequence>& truths) {
  if (forecasts.empty() || forecasts.size() != truths.size()) throw DataError("need matching forecast/truth lists");
  const auto& f0 = forecasts.front();
  LeadTable mse(f0.n_steps, f0.n_channels);
  for (std::size_t d = 0; d < forecasts.size(); ++d) {
    check_aligned(forecasts[d], truths[d]);
    for (int t = 0; t < f0.n_steps; ++t) {
      for (int c = 0; c < f0.n_channels; ++c) {
        mse.add(t, c, weighted_mse(forecasts[d].channel(t, c), truths[d].channel(t, c), f0.grid));
      }
    }
  }
  for (std::size_t i = 0; i < mse.sum.size(); ++i) mse.sum[i] = std::sqrt(mse.sum[i] / mse.count[i]) * mse.count[i];
  return mse;
}

LeadTable acc(const std::vector<FieldSequence>& forecasts, const std::vector<FieldSequence>& truths,
              const std::vector<FieldSequence>& climatologies) {
  if (forecasts.empty() || forecasts.size() != truths.size() || truths.size() != climatologies.size()) {
    throw DataError("need matching forecast/truth/climatology lists");
  }
  const auto& f0 = forecasts.front();
  const auto w = point_weights(f0.grid);
  LeadTable out(f0.n_steps, f0.n_channels);
  for (std::size_t d = 0; d < forecasts.size(); ++d) {
    check_aligned(forecasts[d], truths[d]);
    check_aligned(forecasts[d], climatologies[d]);
    for (int t = 0; t < f0.n_steps; ++t) {
      for (int c = 0; c < f0.n_channels; ++c) {
        const auto f = forecasts[d].channel(t, c);
        const auto a = truths[d].channel(t, c);
        const auto m = climatologies[d].channel(t, c);
        double fa = 0.0, ff = 0.0, aa = 0.0;
        for (int y = 0; y < f0.grid.n_lat; ++y) {
          for (int x = 0; x < f0.grid.n_lon; ++x) {
            const int i = y * f0.grid.n_lon + x;
            const double fp = static_cast<double>(f[i]) - m[i];
            const double ap = static_cast<double>(a[i]) - m[i];
            fa += w[y] * fp * ap;
            ff += w[y] * fp * fp;
            aa += w[y] * ap * ap;
          }
        }
        out.add(t, c, (ff > 0.0 && aa > 0.0) ? fa / std::sqrt(ff * aa) : kNaN);
      }
    }
  }
  return out;
}

CrpsTables crps_tables(const std::vector<std::vector<FieldSequence>>& ensembles,
                       const std::vector<FieldSequence>& truths) {
  if (ensembles.empty() || ensembles.size() != truths.size()) throw DataError("need matching ensemble/truth lists");
  const auto& t0 = truths.front();
  const auto w = point_weights(t0.grid);
  CrpsTables out{LeadTable(t0.n_steps, t0.n_channels), LeadTable(t0.n_steps, t0.n_channels),
                 LeadTable(t0.n_steps, t0.n_channels)};
  for (std::size_t d = 0; d < truths.size(); ++d) {
    const auto& members = ensembles[d];
    if (members.empty()) throw DataError("empty ensemble");
    for (const auto& m : members) check_aligned(m, truths[d]);
    std::vector<double> xs(members.size());
    for (int t = 0; t < t0.n_steps; ++t) {
      for (int c = 0; c < t0.n_channels; ++c) {
        const auto obs = truths[d].channel(t, c);
        double cr = 0.0, sk = 0.0, sp = 0.0;
        for (int y = 0; y < t0.grid.n_lat; ++y) {
          double rc = 0.0, rs = 0.0, rp = 0.0;
          for (int x = 0; x < t0.grid.n_lon; ++x) {
            const int i = y * t0.grid.n_lon + x;
            for (std::size_t k = 0; k < members.size(); ++k) xs[k] = members[k].channel(t, c)[i];
            const auto r = crps(xs, obs[i]);
            rc += r.crps;
            rs += r.skill;
            rp += r.spread;
          }
          cr += w[y] * rc;
          sk += w[y] * rs;
          sp += w[y] * rp;
        }
        out.crps.add(t, c, cr);
        out.skill.add(t, c, sk);
        out.spread.add(t, c, sp);
      }
    }
  }
  return out;
}

double event_probability(const std::vector<FieldSequence>& members, int t, int channel, DegreeRange lat,
                         DegreeRange lon, double lo, double hi) {
  if (members.empty()) throw DataError("event probability needs at least one member");
  int hits = 0;
  for (const auto& m : members) {
    if (t < 0 || t >= m.n_steps) throw DataError("event time outside the forecast");
    const double v = box_mean(m, t, channel, lat, lon);
    if (v >= lo && v <= hi) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(members.size());
}

FieldSequence ensemble_mean(const std::vector<FieldSequence>& members) {
  if (members.empty()) throw DataError("empty ensemble");
  FieldSequence out = members.front();
  std::vector<double> acc(out.values.size(), 0.0);
  for (const auto& m : members) {
    check_aligned(m, out);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += m.values[i];
  }
  for (std::size_t i = 0; i < acc.size(); ++i) out.values[i] = static_cast<float>(acc[i] / members.size());
  return out;
}

double EvalReport::value(const std::string& metric, int channel, int lead_hours) const {
  const std::string& name = channels.at(channel);
  for (const auto& r : rows) {
    if (r.metric == metric && r.channel == name && r.lead_hours == lead_hours) return r.value;
  }
  return kNaN;
}

EvalReport score_forecasts(const std::vector<std::vector<FieldSequence>>& ensembles,
                           const std::vector<FieldSequence>& truths, const std::vector<FieldSequence>& climatologies) {
  const auto& t0 = truths.at(0);
  std::vector<FieldSequence> means;
  std::vector<std::vector<FieldSequence>> clim_ens;
  for (const auto& e : ensembles) means.push_back(ensemble_mean(e));
  for (const auto& c : climatologies) clim_ens.push_back({c});

  const LeadTable r = rmse(means, truths);
  const LeadTable a = acc(means, truths, climatologies);
  const CrpsTables cr = crps_tables(ensembles, truths);
  const LeadTable cr_rmse = rmse(climatologies, truths);
  const LeadTable c_acc = acc(climatologies, truths, climatologies);
  const CrpsTables c_crps = crps_tables(clim_ens, truths);

  EvalReport rep;
  rep.members = static_cast<int>(ensembles.front().size());
  rep.step_hours = t0.step_hours;
  const int n_dyn = t0.n_dynamic();
  for (int c = 0; c < n_dyn; ++c) {
    rep.channels.push_back(c < static_cast<int>(t0.channel_names.size()) ? t0.channel_names[c]
                                                                          : "ch" + std::to_string(c));
  }
  const std::vector<std::pair<std::string, const LeadTable*>> tables{
      {"rmse", &r},          {"acc", &a},             {"crps", &cr.crps},       {"crps_skill", &cr.skill},
      {"crps_spread", &cr.spread}, {"clim_rmse", &cr_rmse}, {"clim_acc", &c_acc}, {"clim_crps", &c_crps.crps}};
  for (const auto& [name, table] : tables) {
    for (int c = 0; c < n_dyn; ++c) {
      for (int t = 0; t < t0.n_steps; ++t) {
        rep.rows.push_back({name, rep.channels[c], (t + 1) * t0.step_hours, table->mean(t, c), table->n(t, c)});
      }
    }
  }

  auto& s = rep.summary;
  s["conventions"] = {
      {"rmse", "sqrt of the mean over init dates of the latitude-weighted spatial MSE of the ensemble mean"},
      {"crps", "fair estimator: mean|x_i-y| - 0.5 * mean_{i!=j}|x_i-x_j|, latitude-weighted, mean over dates"},
      {"acc", "uncentered, latitude-weighted; undefined dates excluded, missing if none remain"},
      {"climatology", "scored as a single deterministic member"}};
  s["members"] = rep.members;
  s["n_init_dates"] = truths.size();
  for (int days : {15, 30}) {
    const int lead = days * 24;
    if (lead / t0.step_hours > t0.n_steps) continue;
    auto& block = s["lead_" + std::to_string(days) + "d"];
    for (int c = 0; c < n_dyn; ++c) {
      const int t = lead / t0.step_hours - 1;
      block[rep.channels[c]] = {{"rmse", r.mean(t, c)},
                                {"crps", cr.crps.mean(t, c)},
                                {"clim_rmse", cr_rmse.mean(t, c)},
                                {"clim_crps", c_crps.crps.mean(t, c)}};
    }
  }
  return rep;
}

std::vector<int> pick_init_indices(int n_steps, int context_frames, int horizon_frames, int n_dates) {
  const int lo = context_frames - 1;
  const int hi = n_steps - horizon_frames - 1;
  if (n_dates < 1 || hi < lo) throw DataError("evaluation span too short for the requested horizon");
  std::vector<int> out;
  for (int i = 0; i < n_dates; ++i) {
    const double f = n_dates == 1 ? 0.0 : static_cast<double>(i) / (n_dates - 1);
    out.push_back(lo + static_cast<int>(std::lround(f * (hi - lo))));
  }
  return out;
}

EvalReport evaluate(const EvalInputs& in) {
  if (!in.model || !in.codec || !in.data || !in.climatology) throw ConfigError("evaluate needs all inputs");
  const FieldSequence& data = *in.data;
  const int fpd = frames_per_day(data.step_hours);
  const int H = fpd * in.rollout.horizon_days;
  const int K = in.rollout.context_frames;
  const auto anchors = pick_init_indices(data.n_steps, K, H, in.n_init_dates);

  std::vector<std::vector<FieldSequence>> ensembles;
  std::vector<FieldSequence> truths, clims;
  for (std::size_t d = 0; d < anchors.size(); ++d) {
    const int anchor = anchors[d];
    const auto ctx_pix = data.slice(anchor - K + 1, K);
    const auto ctx = to_model_space(*in.codec, encode_sequence(*in.codec, ctx_pix));
    RolloutConfig rc = in.rollout;
    rc.seed = derive_seed(in.rollout.seed, d);
    const auto fc = ensemble_forecast(*in.model, ctx, rc);
    std::vector<FieldSequence> members;
    for (const auto& m : fc.members) members.push_back(decode_member(*in.codec, m, ctx_pix));
    ensembles.push_back(std::move(members));
    truths.push_back(data.slice(anchor + 1, H));
    auto clim = climatology_forecast(*in.climatology, data.time_at(anchor + 1), H);
    clim.channel_names = data.channel_names;
    clim.channel_units = data.channel_units;
    clims.push_back(std::move(clim));
    spdlog::info("evaluated init {} ({}/{})", data.time_at(anchor).to_string(), d + 1, anchors.size());
  }
  EvalReport rep = score_forecasts(ensembles, truths, clims);
  rep.init_indices = anchors;
  for (int a : anchors) rep.init_times.push_back(data.time_at(a).to_string());
  rep.summary["init_times"] = rep.init_times;
  return rep;
}

void write_report(const std::filesystem::path& dir, const EvalReport& report) {
  std::filesystem::create_directories(dir);
  std::ofstream os(dir / "metrics.tsv");
  os << "# rmse: sqrt(mean over init dates of latitude-weighted MSE), ensemble mean\n"
     << "# crps: fair estimator (i != j pairs), crps = crps_skill - crps_spread / 2\n"
     << "# acc: uncentered anomaly correlation, nan = missing\n"
     << "# clim_*: climatology scored as one deterministic member\n"
     << "# members " << report.members << " init_dates " << report.init_indices.size() << "\n"
     << "metric\tchannel\tlead_hours\tvalue\tn_init_dates\n";
  for (const auto& r : report.rows) {
    os << r.metric << '\t' << r.channel << '\t' << r.lead_hours << '\t'
       << (std::isnan(r.value) ? std::string("nan") : format_double(r.value)) << '\t' << r.n_init_dates << '\n';
  }
  if (!os) throw FormatError(FormatErrorKind::io, "cannot write metrics.tsv");
  std::ofstream js(dir / "summary.json");
  js << report.summary.dump(2) << "\n";
}

}  // namespace flowcast
