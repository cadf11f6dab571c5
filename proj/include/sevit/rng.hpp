#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace sevit {

/// Seeded random source.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the C++
/// standard for a given seed. The standard distributions are
/// implementation-defined, so every mapping from raw 64-bit words to
/// uniform, integer and normal variates is done here explicitly. A seed
/// therefore yields bit-identical streams on every platform and toolchain.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n), unbiased (rejection sampling). n must be > 0.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t r = engine_();
    while (r >= limit) r = engine_();
    return r % n;
  }

  /// Standard normal via Box-Muller (one variate per call, cosine branch).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Fisher-Yates shuffle of any random-access range.
  template <typename Range>
  void shuffle(Range& range) {
    const auto n = static_cast<std::uint64_t>(std::size(range));
    for (std::uint64_t i = n; i > 1; --i) {
      const std::uint64_t j = below(i);
      using std::swap;
      swap(range[i - 1], range[j]);
    }
  }

  /// Independent child stream, derived deterministically from this one.
  Rng fork() { return Rng(engine_() ^ 0x9E3779B97F4A7C15ULL); }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace sevit
