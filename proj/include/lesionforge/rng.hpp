#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace lesionforge {

// Deterministic random source. std::mt19937_64 has a standard-pinned output
// sequence, but the std distributions do not, so the draw functions below are
// implemented by hand and are part of the reproducibility contract: the same
// seed yields the same draws on every build.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi) {
    return lo + uniform01() * (hi - lo);
  }

  bool bernoulli(double p) { return uniform01() < p; }

  /// Unbiased uniform integer in [0, n). n must be nonzero.
  uint64_t uniform_index(uint64_t n) {
    const uint64_t bound = -n % n;  // 2^64 mod n
    uint64_t r;
    do {
      r = engine_();
    } while (r < bound);
    return r % n;
  }

  /// Standard normal draw (Box-Muller, cosine branch; the sine half is
  /// discarded so every draw consumes exactly two engine outputs).
  double normal() {
    double u1;
    do {
      u1 = uniform01();
    } while (u1 <= 0.0);
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.141592653589793238462643383279502884 * u2);
  }

  /// Derive the seed for substream `index` of a run seeded with `seed`.
  /// Fixed splitmix64-style mix so parallel jobs draw independent streams
  /// regardless of scheduling.
  static uint64_t derive_stream(uint64_t seed, uint64_t index) {
    uint64_t z = seed + 0x9E3779B97F4A7C15ull * (index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace lesionforge
