#pragma once

#include <cmath>
#include <cstdint>

#include "convit/errors.hpp"

namespace convit {

// Seeded 64-bit splitmix generator. Deliberately self-contained so that
// every randomized path in the project (init, shuffling, augmentation,
// synthetic data) is bit-reproducible from a single integer seed.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Uniform in [0,1) with 53 random bits.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Uniform integer in [0, n).
  int next_int(int n) {
    if (n <= 0) throw ContractError("SplitMix64::next_int: n must be positive");
    return static_cast<int>(next_u64() % static_cast<std::uint64_t>(n));
  }

  bool bernoulli(double p) { return next_double() < p; }

  // Standard Box-Muller; both uniforms drawn fresh per call.
  double normal(double mean = 0.0, double stddev = 1.0) {
    double u1 = next_double();
    while (u1 <= 0.0) u1 = next_double();
    const double u2 = next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  // Beta(a, b). Johnk's rejection method when both parameters are <= 1
  // (the mixup regime), gamma-ratio via Marsaglia-Tsang otherwise.
  double beta(double a, double b) {
    if (!(a > 0.0) || !(b > 0.0)) throw ConfigError("beta: parameters must be positive");
    if (a <= 1.0 && b <= 1.0) {
      for (;;) {
        const double u = std::pow(next_double(), 1.0 / a);
        const double v = std::pow(next_double(), 1.0 / b);
        const double s = u + v;
        if (s > 0.0 && s <= 1.0) return u / s;
      }
    }
    const double x = gamma_sample(a);
    const double y = gamma_sample(b);
    return x / (x + y);
  }

  // Derive an independent stream for (seed, a, b); used for per-sample
  // augmentation streams keyed by (seed, epoch, index).
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    SplitMix64 g(seed ^ (a * 0xA24BAED4963EE407ull) ^ (b * 0x9FB21C651E98DF25ull));
    g.next_u64();
    return g.next_u64();
  }

 private:
  double gamma_sample(double shape) {
    if (shape < 1.0) {
      const double u = next_double();
      return gamma_sample(shape + 1.0) * std::pow(u > 0.0 ? u : 1e-300, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x = normal();
      double v = 1.0 + c * x;
      if (v <= 0.0) continue;
      v = v * v * v;
      const double u = next_double();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  std::uint64_t state_;
};

}  // namespace convit
