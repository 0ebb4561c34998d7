#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace diskflow {

// SplitMix64 in counter form: the n-th output is mix(seed + n * 0x9E3779B97F4A7C15).
// Every draw is a pure function of (seed, n), so the streams can be reproduced
// bit for bit from any language with 64-bit unsigned arithmetic.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

  static constexpr std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t next_u64() {
    ++counter_;
    return mix(seed_ + counter_ * kGamma);
  }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Standard normal pair by Box-Muller; u1 is mapped to (0, 1] so log is finite.
  void normal_pair(double& a, double& b) {
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    a = radius * std::cos(angle);
    b = radius * std::sin(angle);
  }

  double normal() {
    double a = 0.0;
    double b = 0.0;
    normal_pair(a, b);
    return a;
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

}  // namespace diskflow
