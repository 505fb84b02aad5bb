#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace ctgen {

/// Deterministic splitmix64 generator. Self-contained so that streams are
/// bit-reproducible across platforms and standard-library versions (the
/// std:: distributions are implementation-defined, which would break the
/// byte-identical rerun guarantee).
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  float uniformf(float lo, float hi) { return lo + (hi - lo) * static_cast<float>(uniform()); }

  /// Standard normal via Box-Muller, one value per call (pair cached).
  float normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    cached_ = static_cast<float>(r * std::sin(a));
    has_cached_ = true;
    return static_cast<float>(r * std::cos(a));
  }

  /// Uniform integer in [0, n). n must be positive.
  int64_t uniform_int(int64_t n) { return static_cast<int64_t>(next_u64() % static_cast<uint64_t>(n)); }

  /// Derived independent stream; deterministic function of (seed, tag).
  Rng fork(uint64_t tag) const {
    Rng mix(state_ ^ (0xA0761D6478BD642Full * (tag + 1)));
    mix.next_u64();
    return mix;
  }

 private:
  uint64_t state_;
  float cached_ = 0.0f;
  bool has_cached_ = false;
};

}  // namespace ctgen
