#include "flowcast/text_util.hpp"

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "flowcast/errors.hpp"

namespace flowcast {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string join(const std::vector<std::string>& parts, char sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::vector<std::string> split(std::string_view text, char sep) {
  std::vector<std::string> out;
  std::size_t begin = 0;
  while (true) {
    const std::size_t pos = text.find(sep, begin);
    out.emplace_back(text.substr(begin, pos == std::string_view::npos ? std::string_view::npos : pos - begin));
    if (pos == std::string_view::npos) break;
    begin = pos + 1;
  }
  return out;
}

std::map<std::string, std::string> parse_key_values(std::string_view text) {
  std::map<std::string, std::string> out;
  std::size_t begin = 0;
  while (begin < text.size()) {
    std::size_t end = text.find('\n', begin);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(begin, end - begin);
    begin = end + 1;
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw FormatError(FormatErrorKind::bad_header, "header line without '=': " + std::string(line));
    }
    std::string key(line.substr(0, eq));
    if (!out.emplace(key, std::string(line.substr(eq + 1))).second) {
      throw FormatError(FormatErrorKind::bad_header, "duplicate header key " + key);
    }
  }
  return out;
}

std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError(FormatErrorKind::io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

namespace {

template <typename Float, typename Bits>
void write_le(std::ostream& os, std::span<const Float> values) {
  std::string buf(values.size() * sizeof(Float), '\0');
  for (std::size_t i = 0; i < values.size(); ++i) {
    Bits bits = std::bit_cast<Bits>(values[i]);
    for (std::size_t b = 0; b < sizeof(Bits); ++b) {
      buf[i * sizeof(Bits) + b] = static_cast<char>((bits >> (8 * b)) & 0xff);
    }
  }
  os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

template <typename Float, typename Bits>
std::vector<Float> read_le(std::string_view bytes) {
  if (bytes.size() % sizeof(Float) != 0) {
    throw FormatError(FormatErrorKind::shape_mismatch, "payload is not a whole number of values");
  }
  std::vector<Float> out(bytes.size() / sizeof(Float));
  const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data());
  for (std::size_t i = 0; i < out.size(); ++i) {
    Bits bits = 0;
    for (std::size_t b = 0; b < sizeof(Bits); ++b) {
      bits |= static_cast<Bits>(raw[i * sizeof(Bits) + b]) << (8 * b);
    }
    out[i] = std::bit_cast<Float>(bits);
  }
  return out;
}

}  // namespace

void write_le_f32(std::ostream& os, std::span<const float> values) {
  write_le<float, std::uint32_t>(os, values);
}
std::vector<float> read_le_f32(std::string_view bytes) { return read_le<float, std::uint32_t>(bytes); }
void write_le_f64(std::ostream& os, std::span<const double> values) {
  write_le<double, std::uint64_t>(os, values);
}
std::vector<double> read_le_f64(std::string_view bytes) { return read_le<double, std::uint64_t>(bytes); }

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace flowcast
