#include "flowcast/grid.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "flowcast/errors.hpp"
#include "flowcast/text_util.hpp"

namespace flowcast {

const char* to_string(FormatErrorKind kind) {
  switch (kind) {
    case FormatErrorKind::io: return "io";
    case FormatErrorKind::bad_magic: return "bad_magic";
    case FormatErrorKind::truncated_header: return "truncated_header";
    case FormatErrorKind::bad_header: return "bad_header";
    case FormatErrorKind::shape_mismatch: return "shape_mismatch";
    case FormatErrorKind::version_mismatch: return "version_mismatch";
    case FormatErrorKind::manifest_inconsistent: return "manifest_inconsistent";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// GridSpec
// ---------------------------------------------------------------------------

void GridSpec::validate() const {
  if (n_lat < 2 || n_lon < 2) {
    throw DataError("grid needs at least 2 latitude rows and 2 longitude columns");
  }
  if (lat_step_deg <= 0.0 || lon_step_deg <= 0.0) {
    throw DataError("grid steps must be positive");
  }
  const double south = lat_deg(0);
  const double north = lat_deg(n_lat - 1);
  if (south < -90.0 - 1e-9 || north > 90.0 + 1e-9) {
    throw DataError("latitude centers must lie in [-90, 90]");
  }
}

GridSpec GridSpec::global(int n_lat, int n_lon) {
  GridSpec g;
  g.n_lat = n_lat;
  g.n_lon = n_lon;
  g.lat_step_deg = 180.0 / n_lat;
  g.lat_start_deg = -90.0 + 0.5 * g.lat_step_deg;
  g.lon_step_deg = 360.0 / n_lon;
  return g;
}

// ---------------------------------------------------------------------------
// Calendar
// ---------------------------------------------------------------------------

namespace {

constexpr std::array<int, 12> kMonthDays = {31, 29, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};

constexpr std::array<int, 13> cumulative_days() {
  std::array<int, 13> out{};
  for (int m = 0; m < 12; ++m) out[m + 1] = out[m] + kMonthDays[m];
  return out;
}

constexpr std::array<int, 13> kDaysBefore = cumulative_days();
static_assert(kDaysBefore[12] == kDaysInCalendar);

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

}  // namespace

int days_in_month(int month) {
  if (month < 1 || month > 12) return 0;
  return kMonthDays[month - 1];
}

bool valid_calendar_date(int month, int day) {
  return month >= 1 && month <= 12 && day >= 1 && day <= kMonthDays[month - 1];
}

int timestamp_index(int month, int day, int hour) {
  if (!valid_calendar_date(month, day) || hour < 0 || hour > 23) {
    std::ostringstream os;
    os << "invalid calendar triple " << month << ":" << day << ":" << hour;
    throw DataError(os.str());
  }
  return (kDaysBefore[month - 1] + day - 1) * 24 + hour;
}

CalendarTime::CalendarTime(int month, int day, int hour, int year)
    : hours_(static_cast<std::int64_t>(year) * kTimestampSlots + timestamp_index(month, day, hour)) {}

CalendarTime CalendarTime::from_hours(std::int64_t hours_since_epoch) {
  CalendarTime t;
  t.hours_ = hours_since_epoch;
  return t;
}

CalendarTime CalendarTime::from_slot(int slot, int year) {
  if (slot < 0 || slot >= kTimestampSlots) throw DataError("timestamp slot out of range");
  return from_hours(static_cast<std::int64_t>(year) * kTimestampSlots + slot);
}

int CalendarTime::year() const { return static_cast<int>(floor_div(hours_, kTimestampSlots)); }

int CalendarTime::slot() const {
  return static_cast<int>(hours_ - floor_div(hours_, kTimestampSlots) * kTimestampSlots);
}

int CalendarTime::day_of_year() const { return slot() / 24; }

int CalendarTime::hour() const { return slot() % 24; }

int CalendarTime::month() const {
  const int doy = day_of_year();
  int m = 0;
  while (kDaysBefore[m + 1] <= doy) ++m;
  return m + 1;
}

int CalendarTime::day() const { return day_of_year() - kDaysBefore[month() - 1] + 1; }

std::string CalendarTime::to_string() const {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "y%d-%02d-%02dT%02d", year(), month(), day(), hour());
  return buf;
}

// ---------------------------------------------------------------------------
// FieldSequence
// ---------------------------------------------------------------------------

FieldSequence::FieldSequence(GridSpec grid_, int n_channels_, int n_static_, CalendarTime start_,
                             int step_hours_, int n_steps_)
    : grid(grid_),
      n_channels(n_channels_),
      n_static(n_static_),
      start(start_),
      step_hours(step_hours_),
      n_steps(n_steps_) {
  for (int c = 0; c < n_channels; ++c) {
    channel_names.push_back("ch" + std::to_string(c));
    channel_units.push_back("1");
  }
  values.assign(static_cast<std::size_t>(n_steps) * frame_size(), 0.0f);
}

FieldSequence FieldSequence::slice(int begin, int count) const {
  if (begin < 0 || count < 1 || begin + count > n_steps) {
    throw DataError("frame slice out of range");
  }
  FieldSequence out = *this;
  out.start = time_at(begin);
  out.n_steps = count;
  out.values.assign(values.begin() + begin * frame_size(),
                    values.begin() + (begin + count) * frame_size());
  return out;
}

void FieldSequence::validate() const {
  grid.validate();
  if (n_steps < 1) throw DataError("field sequence needs at least one frame");
  if (n_channels < 1 || n_static < 0 || n_static > n_channels) {
    throw DataError("invalid channel counts");
  }
  if (step_hours < 1) throw DataError("step_hours must be positive");
  if (static_cast<int>(channel_names.size()) != n_channels ||
      static_cast<int>(channel_units.size()) != n_channels) {
    throw DataError("channel metadata does not match channel count");
  }
  if (values.size() != static_cast<std::size_t>(n_steps) * frame_size()) {
    throw DataError("value buffer does not match [T, C, H, W]");
  }
  for (float v : values) {
    if (!std::isfinite(v)) throw DataError("field sequence contains non-finite values");
  }
}

// ---------------------------------------------------------------------------
// Latitude weighting and box queries
// ---------------------------------------------------------------------------

std::vector<double> cell_area_weights(const GridSpec& grid) {
  grid.validate();
  constexpr double kDeg = std::numbers::pi / 180.0;
  std::vector<double> w(grid.n_lat);
  for (int j = 0; j < grid.n_lat; ++j) {
    const double lo = std::max(-90.0, grid.lat_deg(j) - 0.5 * grid.lat_step_deg);
    const double hi = std::min(90.0, grid.lat_deg(j) + 0.5 * grid.lat_step_deg);
    w[j] = std::sin(hi * kDeg) - std::sin(lo * kDeg);
  }
  return w;
}

LatWeights latitude_weights(const GridSpec& grid) {
  LatWeights out{cell_area_weights(grid)};
  double sum = 0.0;
  for (double v : out.weights) sum += v;
  const double scale = static_cast<double>(grid.n_lat) / sum;
  for (double& v : out.weights) v *= scale;
  return out;
}

std::vector<int> rows_in_range(const GridSpec& grid, DegreeRange lat) {
  std::vector<int> rows;
  for (int j = 0; j < grid.n_lat; ++j) {
    const double phi = grid.lat_deg(j);
    if (phi >= lat.lo && phi <= lat.hi) rows.push_back(j);
  }
  return rows;
}

std::vector<int> cols_in_range(const GridSpec& grid, DegreeRange lon) {
  const double width = lon.hi - lon.lo >= 360.0 ? 360.0 : std::fmod(lon.hi - lon.lo + 720.0, 360.0);
  std::vector<int> cols;
  for (int i = 0; i < grid.n_lon; ++i) {
    const double offset = std::fmod(grid.lon_deg(i) - lon.lo + 720.0, 360.0);
    if (offset < width) cols.push_back(i);
  }
  return cols;
}

double box_mean(std::span<const float> channel_values, const GridSpec& grid, DegreeRange lat,
                DegreeRange lon) {
  const auto rows = rows_in_range(grid, lat);
  const auto cols = cols_in_range(grid, lon);
  if (rows.empty() || cols.empty()) throw DataError("box does not intersect the grid");
  const auto w = latitude_weights(grid).weights;
  double num = 0.0;
  double den = 0.0;
  for (int j : rows) {
    for (int i : cols) {
      num += w[j] * channel_values[static_cast<std::size_t>(j) * grid.n_lon + i];
      den += w[j];
    }
  }
  return num / den;
}

double box_mean(const FieldSequence& seq, int t, int c, DegreeRange lat, DegreeRange lon) {
  if (t < 0 || t >= seq.n_steps || c < 0 || c >= seq.n_channels) {
    throw DataError("box_mean index out of range");
  }
  return box_mean(seq.channel(t, c), seq.grid, lat, lon);
}

// ---------------------------------------------------------------------------
// MRCHK1 file format
// ---------------------------------------------------------------------------

namespace {

constexpr int kFieldFormatVersion = 1;

void write_le_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xffu);
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_le_u32(const unsigned char* b) {
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::string build_header(const FieldSequence& seq) {
  std::ostringstream os;
  os << "version=" << kFieldFormatVersion << "\n"
     << "n_lat=" << seq.grid.n_lat << "\n"
     << "n_lon=" << seq.grid.n_lon << "\n"
     << "lat_start_deg=" << format_double(seq.grid.lat_start_deg) << "\n"
     << "lat_step_deg=" << format_double(seq.grid.lat_step_deg) << "\n"
     << "lon_step_deg=" << format_double(seq.grid.lon_step_deg) << "\n"
     << "n_channels=" << seq.n_channels << "\n"
     << "n_static=" << seq.n_static << "\n"
     << "channel_names=" << join(seq.channel_names, ',') << "\n"
     << "channel_units=" << join(seq.channel_units, ',') << "\n"
     << "start_month=" << seq.start.month() << "\n"
     << "start_day=" << seq.start.day() << "\n"
     << "start_hour=" << seq.start.hour() << "\n"
     << "step_hours=" << seq.step_hours << "\n"
     << "n_steps=" << seq.n_steps << "\n"
     << "start_year=" << seq.start.year() << "\n";
  return os.str();
}

}  // namespace

void write_fields(const FieldSequence& seq, const std::filesystem::path& path) {
  seq.validate();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError(FormatErrorKind::io, "cannot open " + path.string() + " for writing");
  const std::string header = build_header(seq);
  os.write(kFieldMagic, sizeof(kFieldMagic));
  write_le_u32(os, static_cast<std::uint32_t>(header.size()));
  os.write(header.data(), static_cast<std::streamsize>(header.size()));
  write_le_f32(os, seq.values);
  if (!os) throw FormatError(FormatErrorKind::io, "write failed for " + path.string());
}

FieldSequence read_fields(const std::filesystem::path& path) {
  const std::string bytes = read_file_bytes(path);
  if (bytes.size() < sizeof(kFieldMagic)) {
    throw FormatError(FormatErrorKind::truncated_header, "file shorter than magic");
  }
  if (std::memcmp(bytes.data(), kFieldMagic, sizeof(kFieldMagic)) != 0) {
    throw FormatError(FormatErrorKind::bad_magic, "expected MRCHK1 in " + path.string());
  }
  if (bytes.size() < sizeof(kFieldMagic) + 4) {
    throw FormatError(FormatErrorKind::truncated_header, "missing header length");
  }
  const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t header_len = read_le_u32(raw + sizeof(kFieldMagic));
  const std::size_t payload_off = sizeof(kFieldMagic) + 4 + header_len;
  if (bytes.size() < payload_off) {
    throw FormatError(FormatErrorKind::truncated_header, "header extends past end of file");
  }

  const auto kv = parse_key_values(std::string_view(bytes).substr(sizeof(kFieldMagic) + 4, header_len));
  static const char* kRequired[] = {"version",      "n_lat",         "n_lon",         "lat_start_deg",
                                    "lat_step_deg", "lon_step_deg",  "n_channels",    "n_static",
                                    "channel_names", "channel_units", "start_month",  "start_day",
                                    "start_hour",   "step_hours",    "n_steps"};
  for (const char* key : kRequired) {
    if (!kv.contains(key)) throw FormatError(FormatErrorKind::bad_header, std::string("missing key ") + key);
  }
  for (const auto& [key, value] : kv) {
    const bool known = key == "start_year" || std::any_of(std::begin(kRequired), std::end(kRequired),
                                                          [&](const char* k) { return key == k; });
    if (!known) throw FormatError(FormatErrorKind::bad_header, "unknown key " + key);
  }

  FieldSequence seq;
  try {
    if (std::stoi(kv.at("version")) != kFieldFormatVersion) {
      throw FormatError(FormatErrorKind::version_mismatch, "unsupported MRCHK1 version " + kv.at("version"));
    }
    seq.grid.n_lat = std::stoi(kv.at("n_lat"));
    seq.grid.n_lon = std::stoi(kv.at("n_lon"));
    seq.grid.lat_start_deg = std::stod(kv.at("lat_start_deg"));
    seq.grid.lat_step_deg = std::stod(kv.at("lat_step_deg"));
    seq.grid.lon_step_deg = std::stod(kv.at("lon_step_deg"));
    seq.n_channels = std::stoi(kv.at("n_channels"));
    seq.n_static = std::stoi(kv.at("n_static"));
    seq.channel_names = split(kv.at("channel_names"), ',');
    seq.channel_units = split(kv.at("channel_units"), ',');
    const int year = kv.contains("start_year") ? std::stoi(kv.at("start_year")) : 0;
    seq.start = CalendarTime(std::stoi(kv.at("start_month")), std::stoi(kv.at("start_day")),
                             std::stoi(kv.at("start_hour")), year);
    seq.step_hours = std::stoi(kv.at("step_hours"));
    seq.n_steps = std::stoi(kv.at("n_steps"));
  } catch (const FormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw FormatError(FormatErrorKind::bad_header, e.what());
  }
  if (seq.grid.n_lat < 2 || seq.grid.n_lon < 2 || seq.n_channels < 1 || seq.n_steps < 1) {
    throw FormatError(FormatErrorKind::bad_header, "degenerate shape in header");
  }

  const std::size_t expected = static_cast<std::size_t>(seq.n_steps) * seq.frame_size() * 4;
  const std::size_t actual = bytes.size() - payload_off;
  if (actual != expected) {
    std::ostringstream os;
    os << "header declares " << expected << " payload bytes, file has " << actual;
    throw FormatError(FormatErrorKind::shape_mismatch, os.str());
  }
  seq.values = read_le_f32(std::string_view(bytes).substr(payload_off));
  seq.validate();
  return seq;
}

}  // namespace flowcast
