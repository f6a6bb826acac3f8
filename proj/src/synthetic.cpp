#include "flowcast/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "flowcast/errors.hpp"
#include "flowcast/rng.hpp"

namespace flowcast {

namespace {
constexpr double kPi = std::numbers::pi;
constexpr double kDeg = kPi / 180.0;
}  // namespace

// ---------------------------------------------------------------------------
// Lorenz-96
// ---------------------------------------------------------------------------

Lorenz96::Lorenz96(std::vector<double> state, double forcing)
    : x_(std::move(state)), forcing_(forcing) {
  if (x_.size() < 4) throw ConfigError("Lorenz-96 ring needs at least 4 sites");
  const std::size_t n = x_.size();
  k1_.resize(n);
  k2_.resize(n);
  k3_.resize(n);
  k4_.resize(n);
  tmp_.resize(n);
}

void Lorenz96::tendency(const std::vector<double>& x, std::vector<double>& out) const {
  const int n = static_cast<int>(x.size());
  for (int k = 0; k < n; ++k) {
    const double xp1 = x[(k + 1) % n];
    const double xm1 = x[(k - 1 + n) % n];
    const double xm2 = x[(k - 2 + n) % n];
    out[k] = (xp1 - xm2) * xm1 - x[k] + forcing_;
  }
}

void Lorenz96::step(double dt) {
  const std::size_t n = x_.size();
  tendency(x_, k1_);
  for (std::size_t i = 0; i < n; ++i) tmp_[i] = x_[i] + 0.5 * dt * k1_[i];
  tendency(tmp_, k2_);
  for (std::size_t i = 0; i < n; ++i) tmp_[i] = x_[i] + 0.5 * dt * k2_[i];
  tendency(tmp_, k3_);
  for (std::size_t i = 0; i < n; ++i) tmp_[i] = x_[i] + dt * k3_[i];
  tendency(tmp_, k4_);
  for (std::size_t i = 0; i < n; ++i) {
    x_[i] += dt / 6.0 * (k1_[i] + 2.0 * k2_[i] + 2.0 * k3_[i] + k4_[i]);
  }
}

void Lorenz96::integrate(double duration, int n_steps) {
  const double dt = duration / n_steps;
  for (int s = 0; s < n_steps; ++s) step(dt);
}

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

void AtmosphereParams::validate() const {
  grid.validate();
  if (n_years < 1) throw ConfigError("n_years must be >= 1");
  if (n_channels < 1) throw ConfigError("need at least one dynamic channel");
  if (step_hours < 1 || 24 % step_hours != 0) throw ConfigError("step_hours must divide 24");
  const auto per_channel = {&channel_offset, &channel_scale, &meridional_amp, &seasonal_amp,
                            &diurnal_amp,    &wave_amp,      &chaos_amp,      &event_channel_weight};
  for (const auto* v : per_channel) {
    if (static_cast<int>(v->size()) != n_channels) {
      throw ConfigError("per-channel parameter lists must have n_channels entries");
    }
  }
  for (int c = 0; c < n_channels; ++c) {
    if (seasonal_amp[c] < 0 || diurnal_amp[c] < 0 || wave_amp[c] < 0 || chaos_amp[c] < 0) {
      throw ConfigError("amplitudes must be non-negative");
    }
    if (seasonal_amp[c] + diurnal_amp[c] + wave_amp[c] <= 0.0) {
      throw ConfigError("each channel needs a seasonal, diurnal or wave signal");
    }
    if (channel_scale[c] <= 0.0) throw ConfigError("channel_scale must be positive");
  }
  if (wave_numbers.size() != wave_speeds.size()) {
    throw ConfigError("wave_numbers and wave_speeds must have equal length");
  }
  if (noise_amp < 0 || event_rate_per_day < 0 || event_radius_deg <= 0) {
    throw ConfigError("noise/event parameters out of range");
  }
  if (lorenz_sites < 4 || lorenz_bands < 1 || lorenz_substeps_per_hour < 1 || lorenz_mtu_per_day <= 0) {
    throw ConfigError("invalid Lorenz-96 settings");
  }
}

// ---------------------------------------------------------------------------
// Generator
// ---------------------------------------------------------------------------

std::vector<double> lorenz_trajectory(const AtmosphereParams& p) {
  const int n_steps = p.total_steps();
  const int bands = p.lorenz_bands;
  const int sites = p.lorenz_sites;
  const std::uint64_t data_seed = stream_seed(p.seed, SeedStream::data);
  const double dt = p.lorenz_mtu_per_day / 24.0 / p.lorenz_substeps_per_hour;
  const int substeps = p.step_hours * p.lorenz_substeps_per_hour;
  const int spinup = static_cast<int>(std::ceil(p.lorenz_spinup_mtu / dt));

  std::vector<double> traj(static_cast<std::size_t>(n_steps) * bands * sites);
  for (int b = 0; b < bands; ++b) {
    Rng rng(derive_seed(data_seed, 1000 + b));
    std::vector<double> init(sites);
    for (double& v : init) v = p.lorenz_forcing + 0.5 * rng.normal();
    Lorenz96 model(std::move(init), p.lorenz_forcing);
    for (int s = 0; s < spinup; ++s) model.step(dt);
    for (int t = 0; t < n_steps; ++t) {
      std::copy(model.state().begin(), model.state().end(),
                traj.begin() + (static_cast<std::size_t>(t) * bands + b) * sites);
      for (int s = 0; s < substeps; ++s) model.step(dt);
    }
  }
  double mean = 0.0;
  for (double v : traj) mean += v;
  mean /= static_cast<double>(traj.size());
  double var = 0.0;
  for (double v : traj) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(traj.size()));
  for (double& v : traj) v = (v - mean) / sd;
  return traj;
}

namespace {

struct Event {
  double onset_hour;  // hours since generation start
  double lat, lon, amplitude, radius;
  double ramp, plateau, decay;

  double envelope(double hour) const {
    const double s = hour - onset_hour;
    if (s <= 0.0) return 0.0;
    if (s < ramp) return s / ramp;
    if (s < ramp + plateau) return 1.0;
    if (s < ramp + plateau + decay) return 1.0 - (s - ramp - plateau) / decay;
    return 0.0;
  }
  double end_hour() const { return onset_hour + ramp + plateau + decay; }
};

std::vector<Event> draw_events(const AtmosphereParams& p, double span_hours) {
  std::vector<Event> events;
  if (p.event_rate_per_day > 0.0) {
    Rng rng(derive_seed(stream_seed(p.seed, SeedStream::data), 777));
    std::exponential_distribution<double> gap(p.event_rate_per_day / 24.0);
    double t = gap(rng.engine());
    while (t < span_hours) {
      Event e;
      e.onset_hour = t;
      e.lat = -70.0 + 140.0 * rng.uniform();
      e.lon = 360.0 * rng.uniform();
      e.amplitude = (rng.uniform() < 0.5 ? -1.0 : 1.0) * p.event_amp * (0.75 + 0.5 * rng.uniform());
      e.radius = p.event_radius_deg;
      e.ramp = 24.0;
      e.plateau = 72.0 + 72.0 * rng.uniform();
      e.decay = 24.0;
      events.push_back(e);
      t += gap(rng.engine());
    }
  }
  const CalendarTime start(1, 1, 0, p.start_year);
  for (const auto& inj : p.injected) {
    Event e;
    e.onset_hour = static_cast<double>(inj.onset.hours_since_epoch() - start.hours_since_epoch());
    e.lat = inj.lat_deg;
    e.lon = inj.lon_deg;
    e.amplitude = inj.amplitude;
    e.radius = inj.radius_deg;
    e.ramp = inj.ramp_hours;
    e.plateau = inj.plateau_hours;
    e.decay = inj.decay_hours;
    events.push_back(e);
  }
  return events;
}

double blob_shape(const Event& e, double lat, double lon) {
  double dlon = std::fabs(lon - e.lon);
  dlon = std::min(dlon, 360.0 - dlon) * std::cos(0.5 * (lat + e.lat) * kDeg);
  const double dlat = lat - e.lat;
  const double d2 = dlat * dlat + dlon * dlon;
  return std::exp(-0.5 * d2 / (e.radius * e.radius));
}

}  // namespace

FieldSequence generate(const AtmosphereParams& p) {
  p.validate();
  const GridSpec& g = p.grid;
  const int C = p.n_channels;
  const int H = g.n_lat;
  const int W = g.n_lon;
  const int T = p.total_steps();
  const CalendarTime start(1, 1, 0, p.start_year);

  FieldSequence seq(g, C + 1, 1, start, p.step_hours, T);
  static const char* kNames[] = {"t2m", "z500", "u500", "v500"};
  static const char* kUnits[] = {"K", "m", "m/s", "m/s"};
  for (int c = 0; c < C; ++c) {
    seq.channel_names[c] = c < 4 ? kNames[c] : "var" + std::to_string(c);
    seq.channel_units[c] = c < 4 ? kUnits[c] : "1";
  }
  seq.channel_names[C] = "orography";
  seq.channel_units[C] = "m";

  const std::uint64_t data_seed = stream_seed(p.seed, SeedStream::data);
  Rng phase_rng(derive_seed(data_seed, 55));
  const int n_waves = static_cast<int>(p.wave_numbers.size());
  std::vector<double> wave_phase(static_cast<std::size_t>(C) * n_waves);
  for (double& ph : wave_phase) ph = 2.0 * kPi * phase_rng.uniform();
  std::vector<double> oro_phase(3);
  for (double& ph : oro_phase) ph = 2.0 * kPi * phase_rng.uniform();

  // Latitude geometry and Lorenz band/site interpolation tables.
  std::vector<double> lat(H), coslat(H), sinlat(H);
  for (int y = 0; y < H; ++y) {
    lat[y] = g.lat_deg(y);
    coslat[y] = std::cos(lat[y] * kDeg);
    sinlat[y] = std::sin(lat[y] * kDeg);
  }
  const int B = p.lorenz_bands;
  const int K = p.lorenz_sites;
  std::vector<int> band_lo(H), band_hi(H);
  std::vector<double> band_w(H);
  for (int y = 0; y < H; ++y) {
    const double pos = (static_cast<double>(y) + 0.5) * B / H - 0.5;
    const double clamped = std::clamp(pos, 0.0, static_cast<double>(B - 1));
    band_lo[y] = static_cast<int>(std::floor(clamped));
    band_hi[y] = std::min(band_lo[y] + 1, B - 1);
    band_w[y] = clamped - band_lo[y];
  }
  // Each channel reads the ring at its own site offset and sign.
  std::vector<int> site_lo(static_cast<std::size_t>(C) * W);
  std::vector<double> site_w(static_cast<std::size_t>(C) * W);
  for (int c = 0; c < C; ++c) {
    const double offset = 0.5 * c;
    for (int x = 0; x < W; ++x) {
      const double s = static_cast<double>(x) * K / W + offset;
      const double fl = std::floor(s);
      site_lo[c * W + x] = static_cast<int>(fl) % K;
      site_w[c * W + x] = s - fl;
    }
  }
  const double chaos_sign[] = {1.0, -1.0, 1.0, -1.0};

  const std::vector<double> l96 = lorenz_trajectory(p);
  const std::vector<Event> events = draw_events(p, static_cast<double>(T) * p.step_hours);
  const std::uint64_t noise_seed = derive_seed(data_seed, 99);

  std::vector<double> chaos_row(static_cast<std::size_t>(B) * W);
  for (int t = 0; t < T; ++t) {
    const CalendarTime now = seq.time_at(t);
    const double hour_abs = static_cast<double>(t) * p.step_hours;
    const double doy = now.day_of_year() + now.hour() / 24.0;
    const double season = std::cos(2.0 * kPi * (doy - 15.0) / kDaysInCalendar);
    const double* state = l96.data() + static_cast<std::size_t>(t) * B * K;

    std::vector<const Event*> active;
    for (const auto& e : events) {
      if (e.onset_hour < hour_abs && e.end_hour() > hour_abs) active.push_back(&e);
    }
    Rng noise(derive_seed(noise_seed, static_cast<std::uint64_t>(t)));

    for (int c = 0; c < C; ++c) {
      const double sign = chaos_sign[c % 4];
      for (int b = 0; b < B; ++b) {
        for (int x = 0; x < W; ++x) {
          const int k0 = site_lo[c * W + x];
          const double wk = site_w[c * W + x];
          chaos_row[b * W + x] = sign * ((1.0 - wk) * state[b * K + k0] + wk * state[b * K + (k0 + 1) % K]);
        }
      }
      for (int y = 0; y < H; ++y) {
        const double merid = p.meridional_amp[c] * std::cos(2.0 * lat[y] * kDeg);
        const double seas = p.seasonal_amp[c] * season * sinlat[y];
        const double wave_env = coslat[y] * coslat[y];
        for (int x = 0; x < W; ++x) {
          const double lon = g.lon_deg(x);
          double v = merid + seas;
          const double local_hour = now.hour() + lon / 15.0;
          v += p.diurnal_amp[c] * coslat[y] * std::cos(2.0 * kPi * (local_hour - 14.0) / 24.0);
          for (int w = 0; w < n_waves; ++w) {
            const double k = p.wave_numbers[w];
            const double omega = k * p.wave_speeds[w] / 6.0 * kDeg;  // rad per hour
            v += p.wave_amp[c] * wave_env *
                 std::sin(k * lon * kDeg - omega * hour_abs + wave_phase[c * n_waves + w]);
          }
          const double chaos = (1.0 - band_w[y]) * chaos_row[band_lo[y] * W + x] +
                               band_w[y] * chaos_row[band_hi[y] * W + x];
          v += p.chaos_amp[c] * chaos;
          if (p.event_channel_weight[c] != 0.0) {
            for (const Event* e : active) {
              v += p.event_channel_weight[c] * e->amplitude * e->envelope(hour_abs) *
                   blob_shape(*e, lat[y], lon);
            }
          }
          if (p.noise_amp > 0.0) v += p.noise_amp * noise.normal();
          seq.at(t, c, y, x) = static_cast<float>(p.channel_offset[c] + p.channel_scale[c] * v);
        }
      }
    }
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        const double lon = g.lon_deg(x) * kDeg;
        const double oro = 1.2 + 0.6 * std::sin(2.0 * lon + oro_phase[0]) * coslat[y] +
                           0.4 * std::cos(3.0 * lon + oro_phase[1]) * sinlat[y] * coslat[y] +
                           0.3 * std::sin(lat[y] * kDeg * 3.0 + oro_phase[2]);
        seq.at(t, C, y, x) = static_cast<float>(500.0 * std::max(0.0, oro));
      }
    }
  }
  return seq;
}

// ---------------------------------------------------------------------------
// Climatology
// ---------------------------------------------------------------------------

int ClimatologyTable::row_for(const CalendarTime& t) const {
  const int h = t.hour();
  if ((h - first_hour) % step_hours != 0 || h < first_hour) {
    throw DataError("climatology has no slot for hour " + std::to_string(h));
  }
  return t.day_of_year() * slots_per_day() + (h - first_hour) / step_hours;
}

ClimatologyTable build_climatology(const FieldSequence& train, int window_days) {
  train.validate();
  if (static_cast<long>(train.n_steps) * train.step_hours < kTimestampSlots) {
    throw DataError("climatology needs at least one full year of training data");
  }
  if (24 % train.step_hours != 0) throw DataError("step_hours must divide 24");
  if (window_days < 0 || window_days > kDaysInCalendar / 2) throw ConfigError("window_days out of range");

  ClimatologyTable table;
  table.grid = train.grid;
  table.n_channels = train.n_channels;
  table.n_static = train.n_static;
  table.step_hours = train.step_hours;
  table.first_hour = train.start.hour() % train.step_hours;
  table.window_days = window_days;
  table.channel_names = train.channel_names;
  table.channel_units = train.channel_units;

  const int spd = table.slots_per_day();
  const std::size_t fs = table.frame_size();
  const std::size_t rows = static_cast<std::size_t>(kDaysInCalendar) * spd;
  std::vector<double> sums(rows * fs, 0.0);
  std::vector<long> counts(rows, 0);
  for (int t = 0; t < train.n_steps; ++t) {
    const int row = table.row_for(train.time_at(t));
    const auto frame = train.frame(t);
    double* dst = sums.data() + row * fs;
    for (std::size_t i = 0; i < fs; ++i) dst[i] += frame[i];
    ++counts[row];
  }

  table.means.assign(rows * fs, 0.0f);
  std::vector<double> acc(fs);
  for (int day = 0; day < kDaysInCalendar; ++day) {
    for (int s = 0; s < spd; ++s) {
      std::fill(acc.begin(), acc.end(), 0.0);
      long n = 0;
      for (int off = -window_days; off <= window_days; ++off) {
        const int d = ((day + off) % kDaysInCalendar + kDaysInCalendar) % kDaysInCalendar;
        const std::size_t row = static_cast<std::size_t>(d) * spd + s;
        const double* src = sums.data() + row * fs;
        for (std::size_t i = 0; i < fs; ++i) acc[i] += src[i];
        n += counts[row];
      }
      if (n == 0) throw DataError("climatology slot without samples");
      float* dst = table.means.data() + (static_cast<std::size_t>(day) * spd + s) * fs;
      for (std::size_t i = 0; i < fs; ++i) dst[i] = static_cast<float>(acc[i] / n);
    }
  }
  return table;
}

FieldSequence climatology_forecast(const ClimatologyTable& table, const CalendarTime& start,
                                   int n_steps) {
  if (n_steps < 1) throw DataError("climatology forecast needs n_steps >= 1");
  FieldSequence out(table.grid, table.n_channels, table.n_static, start, table.step_hours, n_steps);
  out.channel_names = table.channel_names;
  out.channel_units = table.channel_units;
  for (int t = 0; t < n_steps; ++t) {
    const auto src = table.slot(out.time_at(t));
    std::copy(src.begin(), src.end(), out.frame(t).begin());
  }
  return out;
}

}  // namespace flowcast
