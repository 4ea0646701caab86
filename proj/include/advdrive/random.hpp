#pragma once

// Portable random helpers. std::mt19937_64 output is fully specified by the
// standard but the std distributions are not, so conversions live here.

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace advdrive {

inline std::uint64_t SplitMix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Counter-based sub-seed: DeriveSeed(master, "phase", 3) etc.
inline std::uint64_t DeriveSeed(std::uint64_t base, std::uint64_t counter) {
  return SplitMix64(SplitMix64(base) ^ (counter * 0xD1B54A32D192ED03ULL + 1));
}

inline std::uint64_t DeriveSeed(std::uint64_t base, std::string_view tag) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : tag) {
    h = (h ^ static_cast<unsigned char>(c)) * 0x100000001B3ULL;
  }
  return DeriveSeed(base, h);
}

template <typename... Rest>
std::uint64_t DeriveSeed(std::uint64_t base, std::string_view tag, Rest... rest) {
  return DeriveSeed(DeriveSeed(base, tag), rest...);
}

// Uniform in [0, 1) with 53 random bits.
inline double UniformUnit(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline std::uint64_t UniformIndex(std::mt19937_64& rng, std::uint64_t n) {
  // Rejection sampling keeps the result unbiased.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t r;
  do {
    r = rng();
  } while (r >= limit);
  return r % n;
}

inline double StandardNormal(std::mt19937_64& rng) {
  double u1 = UniformUnit(rng);
  while (u1 <= 0.0) u1 = UniformUnit(rng);
  const double u2 = UniformUnit(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

template <typename T>
void Shuffle(T& items, std::mt19937_64& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(UniformIndex(rng, i));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace advdrive
