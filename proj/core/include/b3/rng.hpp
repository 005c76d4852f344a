#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace b3 {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// mt19937_64 with hand-coded variate transforms. std::normal_distribution and
/// friends are implementation-defined, which would break the reproducibility
/// contract (same seed => bit-identical draws) across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
      : gen_(splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x51ED2701)) | 1ULL) {}

  std::uint64_t next_u64() { return gen_(); }

  /// Open interval (0, 1); never returns an exact 0 or 1, so log() is safe.
  double uniform() {
    return (static_cast<double>(gen_() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  /// Box-Muller without the cached sine branch, so each draw consumes exactly
  /// two uniforms and the stream position is a pure function of call count.
  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  /// Marsaglia-Tsang squeeze; shape >= 1, unit scale.
  double gamma(double shape) {
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x = normal();
      double t = 1.0 + c * x;
      if (t <= 0.0) continue;
      const double v = t * t * t;
      const double u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  /// Standard Student-t with dof >= 2.
  double student_t(double dof) {
    const double z = normal();
    const double chisq = 2.0 * gamma(0.5 * dof);
    return z / std::sqrt(chisq / dof);
  }

  /// Uniform over {0, ..., n-1}; n > 0.
  std::size_t index(std::size_t n) {
    auto k = static_cast<std::size_t>(uniform() * static_cast<double>(n));
    return k < n ? k : n - 1;
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace b3
