#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <utility>

namespace smile {

// The helpers below avoid the standard distributions, whose output differs
// between standard libraries, so datasets are identical across toolchains.

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed of the named sub-stream `name` (optionally indexed) of `root`.
inline std::uint64_t stream_seed(std::uint64_t root, std::string_view name, std::uint64_t index = 0) {
  std::uint64_t h = 1469598103934665603ULL;
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return splitmix64(splitmix64(root ^ h) + index);
}

inline Rng make_stream(std::uint64_t root, std::string_view name, std::uint64_t index = 0) {
  return Rng(stream_seed(root, name, index));
}

/// Uniform double in [0,1) from raw generator output (portable, unlike
/// std::uniform_real_distribution).
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

/// Uniform integer in [0, n).
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

/// Fisher-Yates shuffle built on uniform_index.
template <typename It>
void shuffle(It first, It last, Rng& rng) {
  const auto n = static_cast<std::uint64_t>(last - first);
  for (std::uint64_t i = n; i > 1; --i) {
    const auto j = uniform_index(rng, i);
    std::swap(first[i - 1], first[j]);
  }
}

/// Standard normal via Box-Muller.
inline double normal01(Rng& rng) {
  double u1;
  do {
    u1 = uniform01(rng);
  } while (u1 <= 0.0);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

}  // namespace smile
