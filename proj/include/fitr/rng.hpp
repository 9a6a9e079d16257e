#pragma once

#include <cstdint>
#include <random>

namespace fitr {

/// Seedable generator with platform-independent output: a 64-bit Mersenne
/// twister with hand-written uniform and normal transforms (the standard
/// distribution classes are implementation-defined).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Independent stream for (seed, stream) via splitmix64 mixing.
  static Rng stream(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t next() { return engine_(); }
  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  /// Standard normal by the Box-Muller transform.
  double normal();
  bool bernoulli(double p) { return uniform() < p; }
  /// Uniform integer in [0, n) without modulo bias.
  std::uint64_t below(std::uint64_t n);

 private:
  std::mt19937_64 engine_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace fitr
