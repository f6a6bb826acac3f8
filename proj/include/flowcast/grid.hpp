#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace flowcast {

/// Regular lat-lon raster. Row 0 is the southernmost latitude band.
struct GridSpec {
  int n_lat = 24;
  int n_lon = 48;
  double lat_start_deg = -86.25;
  double lat_step_deg = 7.5;
  double lon_step_deg = 7.5;

  void validate() const;

  double lat_deg(int row) const { return lat_start_deg + lat_step_deg * row; }
  double lon_deg(int col) const { return lon_step_deg * col; }
  std::size_t points() const { return static_cast<std::size_t>(n_lat) * n_lon; }

  /// Global grid with cell centers offset half a step from the poles.
  static GridSpec global(int n_lat, int n_lon);

  bool operator==(const GridSpec&) const = default;
};

constexpr int kDaysInCalendar = 366;
constexpr int kTimestampSlots = kDaysInCalendar * 24;  // 8784

/// Point in the fixed 366-day synthetic calendar, stored as hours since the
/// epoch (year 0, January 1, 00:00). Every year has a February 29.
class CalendarTime {
 public:
  CalendarTime() = default;
  CalendarTime(int month, int day, int hour, int year = 0);

  static CalendarTime from_hours(std::int64_t hours_since_epoch);
  static CalendarTime from_slot(int slot, int year = 0);

  int year() const;
  int month() const;
  int day() const;
  int hour() const;
  int day_of_year() const;  // 0..365
  int slot() const;         // 0..8783
  std::int64_t hours_since_epoch() const { return hours_; }

  CalendarTime plus_hours(std::int64_t hours) const { return from_hours(hours_ + hours); }

  std::string to_string() const;

  auto operator<=>(const CalendarTime&) const = default;

 private:
  std::int64_t hours_ = 0;
};

/// Index of (month, day, hour) in the 8,784-slot leap calendar.
int timestamp_index(int month, int day, int hour);
inline int timestamp_index(const CalendarTime& t) { return t.slot(); }
bool valid_calendar_date(int month, int day);
int days_in_month(int month);

/// Time-ordered multi-channel fields, layout [T][C][H][W]. The last
/// `n_static` channels are time-invariant.
struct FieldSequence {
  GridSpec grid;
  int n_channels = 0;
  int n_static = 0;
  std::vector<std::string> channel_names;
  std::vector<std::string> channel_units;
  CalendarTime start;
  int step_hours = 6;
  int n_steps = 0;
  std::vector<float> values;

  FieldSequence() = default;
  FieldSequence(GridSpec grid, int n_channels, int n_static, CalendarTime start, int step_hours,
                int n_steps);

  int n_dynamic() const { return n_channels - n_static; }
  std::size_t frame_size() const { return static_cast<std::size_t>(n_channels) * grid.points(); }
  std::size_t index(int t, int c, int y, int x) const {
    return ((static_cast<std::size_t>(t) * n_channels + c) * grid.n_lat + y) * grid.n_lon + x;
  }
  float& at(int t, int c, int y, int x) { return values[index(t, c, y, x)]; }
  float at(int t, int c, int y, int x) const { return values[index(t, c, y, x)]; }

  std::span<float> frame(int t) { return {values.data() + t * frame_size(), frame_size()}; }
  std::span<const float> frame(int t) const {
    return {values.data() + t * frame_size(), frame_size()};
  }
  std::span<const float> channel(int t, int c) const {
    return {values.data() + index(t, c, 0, 0), grid.points()};
  }

  CalendarTime time_at(int t) const { return start.plus_hours(static_cast<std::int64_t>(t) * step_hours); }

  /// Frames [begin, begin + count) as a new sequence.
  FieldSequence slice(int begin, int count) const;

  /// Throws DataError when shape bookkeeping or finiteness is violated.
  void validate() const;
};

struct LatWeights {
  std::vector<double> weights;  // one per latitude row, mean 1
};

/// Unnormalized cell-area weights sin(upper edge) - sin(lower edge), edges
/// clipped to the poles.
std::vector<double> cell_area_weights(const GridSpec& grid);
LatWeights latitude_weights(const GridSpec& grid);

struct DegreeRange {
  double lo = 0.0;
  double hi = 0.0;
};

/// Latitude rows whose centers lie in the closed interval.
std::vector<int> rows_in_range(const GridSpec& grid, DegreeRange lat);
/// Longitude columns whose centers lie in [lo, hi) modulo 360.
std::vector<int> cols_in_range(const GridSpec& grid, DegreeRange lon);

/// Latitude-weighted mean over cells with centers inside the box.
double box_mean(const FieldSequence& seq, int t, int c, DegreeRange lat, DegreeRange lon);
double box_mean(std::span<const float> channel_values, const GridSpec& grid, DegreeRange lat,
                DegreeRange lon);

inline constexpr char kFieldMagic[6] = {'M', 'R', 'C', 'H', 'K', '1'};

void write_fields(const FieldSequence& seq, const std::filesystem::path& path);
FieldSequence read_fields(const std::filesystem::path& path);

}  // namespace flowcast
