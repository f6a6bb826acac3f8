#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace flowcast {

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

std::string join(const std::vector<std::string>& parts, char sep);
std::vector<std::string> split(std::string_view text, char sep);

/// Parses `key=value` lines; blank lines are skipped, duplicate keys rejected.
std::map<std::string, std::string> parse_key_values(std::string_view text);

std::string read_file_bytes(const std::filesystem::path& path);

void write_le_f32(std::ostream& os, std::span<const float> values);
std::vector<float> read_le_f32(std::string_view bytes);
void write_le_f64(std::ostream& os, std::span<const double> values);
std::vector<double> read_le_f64(std::string_view bytes);

/// FNV-1a over raw bytes; used for codec identity and file checksums.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed = 1469598103934665603ull);

}  // namespace flowcast
