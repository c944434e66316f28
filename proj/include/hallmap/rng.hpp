// hallmap: multi-sensor indoor mapping and evaluation toolkit
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

namespace hallmap {

/// Counter-based pseudo-random generator built on the SplitMix64 finalizer.
/// Each draw is a pure function of (seed, stream, counter), so results are
/// independent of thread scheduling and call order: any consumer that knows
/// its own counter value reproduces its draws exactly.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream)
      : seed_(seed), stream_(stream) {}

  /// 64 uniform bits for the given counter.
  std::uint64_t bits(std::uint64_t counter) const;

  /// Uniform double in [0, 1).
  double uniform(std::uint64_t counter) const;

  /// Uniform double in [lo, hi).
  double uniform(std::uint64_t counter, double lo, double hi) const;

  /// Standard normal draw (Box-Muller; consumes counters 2*counter and
  /// 2*counter+1, so adjacent normal draws never share bits).
  double normal(std::uint64_t counter) const;

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
};

/// SplitMix64 finisher: bijective 64-bit mix with good avalanche behavior.
std::uint64_t splitmix64(std::uint64_t x);

}  // namespace hallmap
