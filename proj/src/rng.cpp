// hallmap: multi-sensor indoor mapping and evaluation toolkit
// SPDX-License-Identifier: Apache-2.0

#include "hallmap/rng.hpp"

#include <cmath>
#include <numbers>

namespace hallmap {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::uint64_t CounterRng::bits(std::uint64_t counter) const {
  // Mix the three inputs through two finisher rounds so that nearby
  // (stream, counter) pairs decorrelate.
  std::uint64_t h = splitmix64(seed_ ^ (stream_ * 0xd6e8feb86659fd93ull));
  return splitmix64(h ^ counter);
}

double CounterRng::uniform(std::uint64_t counter) const {
  // Top 53 bits -> [0, 1) with full double resolution.
  return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
}

double CounterRng::uniform(std::uint64_t counter, double lo, double hi) const {
  return lo + (hi - lo) * uniform(counter);
}

double CounterRng::normal(std::uint64_t counter) const {
  const double u1 = uniform(2 * counter);
  const double u2 = uniform(2 * counter + 1);
  // Guard against log(0).
  const double r = std::sqrt(-2.0 * std::log(1.0 - u1));
  return r * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace hallmap
