#pragma once

#include <cmath>
#include <cstdint>

namespace dxs {

// Counter-based generator: each draw mixes an incrementing counter
// (splitmix64), so a stream is a pure function of (seed, stream id, index).
// Distributions are implemented here so draws are identical across standard
// libraries and platforms.
class Rng {
 public:
  explicit Rng(uint64_t seed, uint64_t stream = 0)
      : counter_(seed ^ (0x9e3779b97f4a7c15ULL * (stream + 1))) {}

  uint64_t next_u64() {
    uint64_t z = (counter_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() { return (next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  uint64_t uniform_index(uint64_t n) { return next_u64() % n; }

  // Standard normal via Box-Muller; caches the second value.
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * 3.14159265358979323846 * u2;
    cached_ = r * std::sin(a);
    has_cached_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  uint64_t counter_;
  bool has_cached_ = false;
  double cached_ = 0.0;
};

}  // namespace dxs
