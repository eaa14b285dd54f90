#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace sarlora {

// Every stochastic component takes an explicit stream of this type.
using Rng = std::mt19937_64;

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  return splitmix64(a ^ splitmix64(b + 0x632BE59BD9B4E019ULL));
}

// The distributions below are written out rather than taken from <random>
// so that streams are identical across standard library implementations.

inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double bits_to_unit_open(std::uint64_t bits) {
  // (0, 1], never zero so it is safe under log().
  return (static_cast<double>(bits >> 11) + 1.0) * 0x1.0p-53;
}

inline double box_muller(double u1, double u2) {
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

inline double standard_normal(Rng& rng) {
  const double u1 = bits_to_unit_open(rng());
  const double u2 = uniform01(rng);
  return box_muller(u1, u2);
}

inline bool bernoulli(Rng& rng, double p) { return uniform01(rng) < p; }

// Uniform integer in [0, n) by rejection.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t v;
  do {
    v = rng();
  } while (v >= limit);
  return v % n;
}

}  // namespace sarlora
