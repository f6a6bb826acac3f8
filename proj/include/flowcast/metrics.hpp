#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "flowcast/checkpoint.hpp"
#include "flowcast/forecaster.hpp"
#include "flowcast/synthetic.hpp"

namespace flowcast {

struct CrpsTerms {
  double crps = 0.0;
  double skill = 0.0;   // mean |x_i - y|
  double spread = 0.0;  // mean |x_i - x_j| over i != j
};

/// Fair ensemble CRPS at one point: skill - spread / 2. Throws on M = 0.
CrpsTerms crps(std::span<const double> members, double obs);

/// Latitude-weighted spatial mean of (f - t)^2 over one channel's grid.
double weighted_mse(std::span<const float> forecast, std::span<const float> truth, const GridSpec& grid);

/// Per-(lead, channel) table averaged over init dates. Missing entries are
/// NaN and excluded from counts.
struct LeadTable {
  int leads = 0;
  int channels = 0;
  std::vector<double> sum;
  std::vector<int> count;

  LeadTable() = default;
  LeadTable(int leads, int channels)
      : leads(leads), channels(channels), sum(static_cast<std::size_t>(leads) * channels, 0.0),
        count(static_cast<std::size_t>(leads) * channels, 0) {}
  void add(int lead, int channel, double v);
  double mean(int lead, int channel) const;
  int n(int lead, int channel) const { return count[static_cast<std::size_t>(lead) * channels + channel]; }
};

/// Each date contributes forecast/truth sequences of identical shape and
/// start time. RMSE = sqrt(mean over dates of the weighted MSE).
LeadTable rmse(const std::vector<FieldSequence>& forecasts, const std::vector<FieldSequence>& truths);
/// Uncentered anomaly correlation; undefined dates (zero anomaly variance)
/// are left out, and leads with no defined date stay NaN.
LeadTable acc(const std::vector<FieldSequence>& forecasts, const std::vector<FieldSequence>& truths,
              const std::vector<FieldSequence>& climatologies);

/// Field-level fair CRPS: weighted spatial means per date, then averaged
/// over dates. `ensembles[d]` holds the members for date d.
struct CrpsTables {
  LeadTable crps, skill, spread;
};
CrpsTables crps_tables(const std::vector<std::vector<FieldSequence>>& ensembles,
                       const std::vector<FieldSequence>& truths);

/// Fraction of members whose box mean at `t` lies in [lo, hi].
double event_probability(const std::vector<FieldSequence>& members, int t, int channel, DegreeRange lat,
                         DegreeRange lon, double lo, double hi);

FieldSequence ensemble_mean(const std::vector<FieldSequence>& members);

struct MetricRow {
  std::string metric;
  std::string channel;
  int lead_hours = 0;
  double value = 0.0;  // NaN when missing
  int n_init_dates = 0;
};

struct EvalReport {
  std::vector<int> init_indices;
  std::vector<std::string> init_times;
  int members = 0;
  int step_hours = 6;
  std::vector<std::string> channels;
  std::vector<MetricRow> rows;
  nlohmann::ordered_json summary;

  /// NaN when the row is absent.
  double value(const std::string& metric, int channel, int lead_hours) const;
};

inline const std::vector<std::string>& report_metrics() {
  static const std::vector<std::string> m{"rmse",      "acc",       "crps",      "crps_skill",
                                          "crps_spread", "clim_rmse", "clim_acc", "clim_crps"};
  return m;
}

/// Builds metric rows for the dynamic channels. Climatology forecasts are
/// scored as a deterministic (M = 1) ensemble.
EvalReport score_forecasts(const std::vector<std::vector<FieldSequence>>& ensembles,
                           const std::vector<FieldSequence>& truths, const std::vector<FieldSequence>& climatologies);

/// Evenly spaced anchors leaving room for the context before and the
/// horizon after each one.
std::vector<int> pick_init_indices(int n_steps, int context_frames, int horizon_frames, int n_dates);

struct EvalInputs {
  const DitModel* model = nullptr;
  const Codec* codec = nullptr;
  const FieldSequence* data = nullptr;  // evaluation span, physical units
  const ClimatologyTable* climatology = nullptr;
  RolloutConfig rollout;                // horizon / members / seed taken from here
  int n_init_dates = 16;
};

/// Ensemble forecasts from each init date, decoded and verified.
EvalReport evaluate(const EvalInputs& in);

/// metrics.tsv (header with conventions, then one row per metric, channel
/// and lead) and summary.json.
void write_report(const std::filesystem::path& dir, const EvalReport& report);

}  // namespace flowcast
