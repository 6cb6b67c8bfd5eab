// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace deqflow {

/// Stateless counter-based random stream. Every draw is a pure function of
/// (seed, stream, counter), so results do not depend on how work is split
/// across workers or in which order draws are requested.
class CounterRng {
 public:
  constexpr CounterRng() = default;
  constexpr explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
      : key_(mix(seed ^ 0x9e3779b97f4a7c15ULL) ^ mix(stream + 0x632be59bd9b4e019ULL)) {}

  /// Derive an independent child stream, e.g. one per example.
  constexpr CounterRng substream(std::uint64_t id) const {
    CounterRng child;
    child.key_ = mix(key_ ^ mix(id + 0xd1b54a32d192ed03ULL));
    return child;
  }

  constexpr std::uint64_t bits(std::uint64_t counter) const {
    return mix(key_ + mix(counter ^ 0xbf58476d1ce4e5b9ULL));
  }

  /// Uniform in [0, 1) with 53 random bits.
  constexpr double uniform(std::uint64_t counter) const {
    return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller on counters (2i, 2i+1).
  double normal(std::uint64_t i) const {
    const double u1 = 1.0 - uniform(2 * i);  // (0, 1]
    const double u2 = uniform(2 * i + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Uniform integer in [0, n).
  constexpr std::uint64_t below(std::uint64_t counter, std::uint64_t n) const {
    // 128-bit multiply-shift keeps the bias below 2^-64 * n.
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(bits(counter)) * n) >> 64);
  }

 private:
  // splitmix64 finalizer
  static constexpr std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t key_ = 0;
};

}  // namespace deqflow
