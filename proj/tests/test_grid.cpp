#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <set>

#include "doctest.h"
#include "flowcast/errors.hpp"
#include "flowcast/grid.hpp"
#include "flowcast/text_util.hpp"
#include "test_util.hpp"

using namespace flowcast;

namespace {

// Simpson quadrature of cos(phi) over [lo, hi] degrees.
double cos_integral(double lo, double hi) {
  const int n = 2000;
  const double h = (hi - lo) / n;
  auto f = [](double deg) { return std::cos(deg * std::numbers::pi / 180.0); };
  double s = f(lo) + f(hi);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(lo + i * h);
  return s * h / 3.0;
}

FieldSequence random_sequence(std::mt19937_64& rng, int T, int C, int H, int W) {
  FieldSequence seq(GridSpec::global(H, W), C, C > 1 ? 1 : 0, CalendarTime(3, 14, 6, 2), 6, T);
  std::normal_distribution<float> nd(0.0f, 10.0f);
  for (float& v : seq.values) v = nd(rng);
  for (int t = 1; t < T; ++t) {
    for (int c = C - seq.n_static; c < C; ++c) {
      for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) seq.at(t, c, y, x) = seq.at(0, c, y, x);
      }
    }
  }
  return seq;
}

}  // namespace

TEST_CASE("latitude weights are positive, mean one and symmetric") {
  for (auto grid : {GridSpec::global(24, 48), GridSpec::global(121, 240), GridSpec{}}) {
    const auto w = latitude_weights(grid).weights;
    double sum = 0.0;
    for (double v : w) {
      CHECK(v > 0.0);
      sum += v;
    }
    CHECK(std::fabs(sum / w.size() - 1.0) < 1e-12);
    for (std::size_t j = 0; j < w.size(); ++j) {
      CHECK(std::fabs(w[j] - w[w.size() - 1 - j]) < 1e-12);
    }
  }
}

TEST_CASE("pole rows get nonzero weight on a grid with centers at the poles") {
  GridSpec g{121, 240, -90.0, 1.5, 1.5};
  const auto w = latitude_weights(g).weights;
  CHECK(w.front() > 0.0);
  CHECK(w.back() > 0.0);
}

TEST_CASE("unnormalized weights of a grid tiling the sphere sum to two") {
  GridSpec g{2, 4, -45.0, 90.0, 90.0};
  const auto w = cell_area_weights(g);
  CHECK(w[0] + w[1] == doctest::Approx(2.0).epsilon(1e-14));
  GridSpec fine = GridSpec::global(90, 4);
  double s = 0.0;
  for (double v : cell_area_weights(fine)) s += v;
  CHECK(s == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("1.5 degree weight ratio equator / 60N matches quadrature") {
  GridSpec g{121, 240, -90.0, 1.5, 1.5};
  const auto w = latitude_weights(g).weights;
  const int eq = 60;
  const int n60 = 100;
  REQUIRE(g.lat_deg(eq) == doctest::Approx(0.0));
  REQUIRE(g.lat_deg(n60) == doctest::Approx(60.0));
  const double oracle = cos_integral(-0.75, 0.75) / cos_integral(59.25, 60.75);
  // Frozen from scipy.integrate.quad of cos(phi) over each cell.
  CHECK(oracle == doctest::Approx(2.0).epsilon(1e-10));
  CHECK(w[eq] / w[n60] == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("degenerate grid is rejected") {
  GridSpec g{1, 8, 0.0, 1.0, 45.0};
  CHECK_THROWS_AS(latitude_weights(g), DataError);
}

TEST_CASE("timestamp index anchors") {
  CHECK(timestamp_index(1, 1, 0) == 0);
  CHECK(timestamp_index(12, 31, 23) == 8783);
  CHECK(timestamp_index(2, 29, 12) == (31 + 28) * 24 + 12);
  CHECK(timestamp_index(2, 29, 12) == 1428);
  CHECK_THROWS_AS(timestamp_index(2, 30, 0), DataError);
  CHECK_THROWS_AS(timestamp_index(4, 31, 0), DataError);
  CHECK_THROWS_AS(timestamp_index(13, 1, 0), DataError);
  CHECK_THROWS_AS(timestamp_index(1, 1, 24), DataError);
}

TEST_CASE("timestamp index is a bijection over the leap calendar") {
  std::set<int> seen;
  int count = 0;
  for (int m = 1; m <= 12; ++m) {
    for (int d = 1; d <= days_in_month(m); ++d) {
      for (int h = 0; h < 24; ++h) {
        const int idx = timestamp_index(m, d, h);
        CHECK(idx >= 0);
        CHECK(idx < kTimestampSlots);
        seen.insert(idx);
        ++count;
        const CalendarTime t = CalendarTime::from_slot(idx, 5);
        CHECK(t.month() == m);
        CHECK(t.day() == d);
        CHECK(t.hour() == h);
      }
    }
  }
  CHECK(count == kTimestampSlots);
  CHECK(seen.size() == static_cast<std::size_t>(kTimestampSlots));
}

TEST_CASE("calendar arithmetic wraps through the 366-day year") {
  const CalendarTime t(12, 31, 18, 0);
  const CalendarTime next = t.plus_hours(6);
  CHECK(next.year() == 1);
  CHECK(next.month() == 1);
  CHECK(next.day() == 1);
  CHECK(next.hour() == 0);
  CHECK(CalendarTime(2, 28, 18).plus_hours(6).day() == 29);
}

TEST_CASE("field file round trip is bitwise lossless for random shapes") {
  std::mt19937_64 rng(7);
  const auto dir = test_tmp_dir("grid_roundtrip");
  for (int trial = 0; trial < 12; ++trial) {
    std::uniform_int_distribution<int> tdist(1, 8), cdist(1, 6), hdist(2, 32);
    const auto seq = random_sequence(rng, tdist(rng), cdist(rng), hdist(rng), hdist(rng));
    const auto path = dir / "seq.mrchk";
    write_fields(seq, path);
    const auto back = read_fields(path);
    CHECK(back.grid == seq.grid);
    CHECK(back.n_channels == seq.n_channels);
    CHECK(back.n_static == seq.n_static);
    CHECK(back.channel_names == seq.channel_names);
    CHECK(back.channel_units == seq.channel_units);
    CHECK(back.start == seq.start);
    CHECK(back.step_hours == seq.step_hours);
    CHECK(back.n_steps == seq.n_steps);
    REQUIRE(back.values.size() == seq.values.size());
    CHECK(std::memcmp(back.values.data(), seq.values.data(), seq.values.size() * 4) == 0);
  }
}

TEST_CASE("field file layout starts with magic and little-endian header length") {
  std::mt19937_64 rng(1);
  const auto seq = random_sequence(rng, 2, 2, 4, 6);
  const auto path = test_tmp_dir("grid_layout") / "a.mrchk";
  write_fields(seq, path);
  const std::string bytes = read_file_bytes(path);
  REQUIRE(bytes.size() > 10);
  CHECK(bytes.substr(0, 6) == "MRCHK1");
  const auto* b = reinterpret_cast<const unsigned char*>(bytes.data()) + 6;
  const std::size_t header_len = b[0] | (b[1] << 8) | (b[2] << 16) | (b[3] << 24);
  const std::string header = bytes.substr(10, header_len);
  CHECK(header.find("n_steps=2\n") != std::string::npos);
  CHECK(header.find("channel_names=ch0,ch1\n") != std::string::npos);
  CHECK(bytes.size() == 10 + header_len + seq.values.size() * 4);
}

TEST_CASE("corrupted field files raise distinct errors") {
  std::mt19937_64 rng(3);
  auto seq = random_sequence(rng, 3, 2, 4, 6);
  const auto dir = test_tmp_dir("grid_errors");
  const auto good = dir / "good.mrchk";
  write_fields(seq, good);
  const std::string bytes = read_file_bytes(good);

  auto expect_kind = [&](const std::string& content, FormatErrorKind kind) {
    const auto p = dir / "bad.mrchk";
    std::ofstream(p, std::ios::binary) << content;
    try {
      (void)read_fields(p);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(e.kind() == kind);
    }
  };

  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  expect_kind(bad_magic, FormatErrorKind::bad_magic);

  expect_kind(bytes.substr(0, bytes.size() - 1), FormatErrorKind::shape_mismatch);
  expect_kind(bytes.substr(0, 12), FormatErrorKind::truncated_header);

  // Header says T=2 while the payload holds three frames.
  auto two = seq.slice(0, 2);
  const auto two_path = dir / "two.mrchk";
  write_fields(two, two_path);
  std::string two_bytes = read_file_bytes(two_path);
  two_bytes += bytes.substr(bytes.size() - seq.frame_size() * 4);
  expect_kind(two_bytes, FormatErrorKind::shape_mismatch);
}

TEST_CASE("box mean: constant field, whole globe and hand-summed 2x2 box") {
  GridSpec g = GridSpec::global(12, 24);
  FieldSequence seq(g, 1, 0, CalendarTime(), 6, 1);
  std::fill(seq.values.begin(), seq.values.end(), 3.5f);
  CHECK(box_mean(seq, 0, 0, {50, 60}, {30, 45}) == doctest::Approx(3.5));

  std::mt19937_64 rng(11);
  std::normal_distribution<float> nd;
  for (float& v : seq.values) v = nd(rng);
  const auto w = latitude_weights(g).weights;
  double num = 0.0, den = 0.0;
  for (int y = 0; y < g.n_lat; ++y) {
    for (int x = 0; x < g.n_lon; ++x) {
      num += w[y] * seq.at(0, 0, y, x);
      den += w[y];
    }
  }
  CHECK(box_mean(seq, 0, 0, {-90, 90}, {0, 360}) == doctest::Approx(num / den).epsilon(1e-12));

  // Rows 9,10 are at 52.5 and 67.5; columns 23 and 0 straddle the dateline.
  auto v = [&](int y, int x) { return static_cast<double>(seq.at(0, 0, y, x)); };
  const double num2 = w[9] * (v(9, 23) + v(9, 0)) + w[10] * (v(10, 23) + v(10, 0));
  const double den2 = 2.0 * (w[9] + w[10]);
  CHECK(box_mean(seq, 0, 0, {50, 70}, {340, 10}) == doctest::Approx(num2 / den2).epsilon(1e-12));

  CHECK_THROWS_AS(box_mean(seq, 0, 0, {1, 2}, {0, 360}), DataError);
}

TEST_CASE("box mean is invariant to longitude rotation of field and box") {
  GridSpec g = GridSpec::global(12, 24);
  FieldSequence seq(g, 1, 0, CalendarTime(), 6, 1);
  std::mt19937_64 rng(5);
  std::normal_distribution<float> nd;
  for (float& v : seq.values) v = nd(rng);
  FieldSequence rot = seq;
  const int shift = 5;
  for (int y = 0; y < g.n_lat; ++y) {
    for (int x = 0; x < g.n_lon; ++x) rot.at(0, 0, y, (x + shift) % g.n_lon) = seq.at(0, 0, y, x);
  }
  const double d = shift * g.lon_step_deg;
  CHECK(box_mean(seq, 0, 0, {0, 60}, {300, 40}) ==
        doctest::Approx(box_mean(rot, 0, 0, {0, 60}, {300 + d, 40 + d})).epsilon(1e-12));
}
