#pragma once

#include <cstdint>
#include <random>

namespace flowcast {

/// SplitMix64 finalizer; used to derive independent seed streams.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// Seed for sub-stream `index` of `base` (member seeds, band seeds, ...).
constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  return mix_seed(mix_seed(base) ^ mix_seed(index + 0x632be59bd9b4e019ull));
}

/// Named seed streams so data, init and noise draws never share state.
enum class SeedStream : std::uint64_t { data = 1, init = 2, noise = 3, window = 4, member = 5 };

constexpr std::uint64_t stream_seed(std::uint64_t base, SeedStream s) {
  return derive_seed(base, static_cast<std::uint64_t>(s) * 0x100000001b3ull);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  /// Uniform integer in [lo, hi].
  int uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine_); }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace flowcast
