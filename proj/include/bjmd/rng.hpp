#pragma once

#include "bjmd/types.hpp"

#include <cmath>
#include <cstdint>
#include <random>

namespace bjmd {

/// Deterministic random source. All distribution draws are implemented here
/// rather than with std:: distributions, so a given seed produces the same
/// stream on every platform and standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(mix(seed)) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on the open interval (0, 1).
  double uniform() {
    // 53 random mantissa bits; +0.5 ulp offset keeps the draw away from 0.
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller.
  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  bool bernoulli(double p) { return uniform() < p; }

  /// Gamma(shape, 1) via Marsaglia-Tsang squeeze; shape < 1 handled by boosting.
  double gamma(double shape) {
    if (shape < 1.0) {
      const double u = uniform();
      return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x = normal();
      double v = 1.0 + c * x;
      if (v <= 0.0) continue;
      v = v * v * v;
      const double u = uniform();
      if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v;
    }
  }

  /// One draw from Dirichlet(alpha) by gamma normalization. The last entry is
  /// fixed up so the result sums to 1 exactly.
  Vector dirichlet(const Vector& alpha) {
    const Eigen::Index k = alpha.size();
    Vector g(k);
    for (Eigen::Index i = 0; i < k; ++i) g[i] = gamma(alpha[i]);
    const double total = g.sum();
    if (total <= 0.0) return Vector::Constant(k, 1.0 / static_cast<double>(k));
    g /= total;
    g[k - 1] = 1.0 - g.head(k - 1).sum();
    return g;
  }

  /// Independent substream for stream index `n` (per-source seeds and alike).
  Rng spawn(std::uint64_t n) const { return Rng(seed_ ^ mix(n + 1)); }

 private:
  // splitmix64 finalizer; spreads low-entropy seeds over the full state space.
  static std::uint64_t mix(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
  }

  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace bjmd
