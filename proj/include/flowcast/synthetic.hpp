#pragma once

#include <cstdint>
#include <vector>

#include "flowcast/grid.hpp"

namespace flowcast {

/// Lorenz-96 ring dX_k/dt = (X_{k+1} - X_{k-2}) X_{k-1} - X_k + F, advanced
/// with classical RK4.
class Lorenz96 {
 public:
  Lorenz96(std::vector<double> state, double forcing);

  void step(double dt);
  /// Advances by `duration` in `n_steps` equal RK4 steps.
  void integrate(double duration, int n_steps);

  const std::vector<double>& state() const { return x_; }
  double forcing() const { return forcing_; }

  void tendency(const std::vector<double>& x, std::vector<double>& out) const;

 private:
  std::vector<double> x_;
  double forcing_;
  std::vector<double> k1_, k2_, k3_, k4_, tmp_;
};

/// Localized, persistent anomaly forced into the generator at a fixed time.
struct InjectedEvent {
  CalendarTime onset;
  double lat_deg = 56.25;
  double lon_deg = 37.5;
  double amplitude = -4.0;  // standardized units, scaled per channel
  double radius_deg = 12.0;
  double ramp_hours = 24.0;
  double plateau_hours = 120.0;
  double decay_hours = 24.0;
};

struct AtmosphereParams {
  std::uint64_t seed = 20240601;
  int n_years = 4;
  int start_year = 0;
  GridSpec grid;
  int n_channels = 4;  // dynamic channels; one static channel is appended
  int step_hours = 6;

  std::vector<double> channel_offset = {280.0, 5500.0, 10.0, 0.0};
  std::vector<double> channel_scale = {8.0, 60.0, 6.0, 5.0};
  std::vector<double> meridional_amp = {2.0, 1.5, 1.0, 0.0};
  std::vector<double> seasonal_amp = {1.5, 1.0, 0.6, 0.3};
  std::vector<double> diurnal_amp = {0.8, 0.2, 0.3, 0.3};
  std::vector<double> wave_amp = {0.15, 0.2, 0.15, 0.15};
  std::vector<double> chaos_amp = {1.0, 1.0, 1.0, 1.0};

  std::vector<int> wave_numbers = {2, 3};
  std::vector<double> wave_speeds = {2.5, -1.5};  // degrees longitude per 6 h

  double lorenz_forcing = 8.0;
  int lorenz_sites = 16;
  int lorenz_bands = 4;
  double lorenz_mtu_per_day = 0.1;  // Lorenz time units per simulated day
  int lorenz_substeps_per_hour = 1;
  double lorenz_spinup_mtu = 10.0;

  double noise_amp = 0.03;

  double event_rate_per_day = 0.25;  // random blob events, global rate
  double event_amp = 3.0;
  double event_radius_deg = 12.0;
  std::vector<double> event_channel_weight = {1.0, 0.5, 0.0, 0.0};
  std::vector<InjectedEvent> injected;

  void validate() const;
  int total_steps() const { return n_years * kTimestampSlots / step_hours; }
};

/// Synthetic atmosphere: meridional profile + seasonal + diurnal + traveling
/// waves + Lorenz-96 chaos + blob events + white noise, fully seeded.
FieldSequence generate(const AtmosphereParams& params);

/// Per-band Lorenz-96 states at each output step, standardized to zero mean
/// and unit variance over the span. Layout [T][band][site].
std::vector<double> lorenz_trajectory(const AtmosphereParams& params);

struct ClimatologyTable {
  GridSpec grid;
  int n_channels = 0;
  int n_static = 0;
  int step_hours = 6;
  int first_hour = 0;  // hour of day of the first used slot
  int window_days = 7;
  std::vector<std::string> channel_names;
  std::vector<std::string> channel_units;
  std::vector<float> means;  // [366 * slots_per_day][C][H][W]

  int slots_per_day() const { return 24 / step_hours; }
  std::size_t frame_size() const { return static_cast<std::size_t>(n_channels) * grid.points(); }
  /// Row of the table for a calendar time; throws DataError for hours the
  /// table does not cover.
  int row_for(const CalendarTime& t) const;
  std::span<const float> slot(const CalendarTime& t) const {
    return {means.data() + row_for(t) * frame_size(), frame_size()};
  }
};

ClimatologyTable build_climatology(const FieldSequence& train, int window_days);

FieldSequence climatology_forecast(const ClimatologyTable& table, const CalendarTime& start,
                                   int n_steps);

}  // namespace flowcast
