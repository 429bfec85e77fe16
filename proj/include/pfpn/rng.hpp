#pragma once

#include <cmath>
#include <cstdint>

namespace pfpn {

/// SplitMix64 generator. Hand-rolled so that every draw is bit-stable across
/// platforms and toolchains (std distributions are not).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi], both ends inclusive. Modulo bias is
  /// irrelevant at the range sizes used here.
  int uniform_int(int lo, int hi) {
    return lo + static_cast<int>(next_u64() %
                                 static_cast<std::uint64_t>(hi - lo + 1));
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal via Box-Muller (one value per pair of uniforms).
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  /// Derives an independent substream seed, so per-sample streams are
  /// reproducible regardless of evaluation order.
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
    Rng mix(seed ^ (0x632be59bd9b4e019ULL + stream * 0x100000001b3ULL));
    return mix.next_u64();
  }

 private:
  std::uint64_t state_;
};

}  // namespace pfpn
