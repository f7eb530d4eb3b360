#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "osr/error.hpp"

namespace osr {

// One splitmix64 step; used only to derive child-stream seeds.
inline std::uint64_t splitmix64_next(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Deterministic random stream.
//
// Core generator is std::mt19937_64, which the standard pins bit-exactly.
// Real-valued draws (uniform, normal, gamma) are implemented here instead of
// via <random> distributions, whose outputs are implementation-defined and
// would break cross-platform replay. Child streams are derived from the
// parent seed and a label through splitmix64, independent of how many draws
// the parent has made.
class Rng {
public:
  static constexpr const char* kAlgorithm = "mt19937_64+splitmix64";

  explicit Rng(std::uint64_t seed) : seed_(seed), eng_(seed) {}

  std::uint64_t seed() const { return seed_; }

  Rng split(std::uint64_t label) const {
    std::uint64_t s = seed_ + 0x9e3779b97f4a7c15ULL * (label + 1);
    splitmix64_next(s);
    std::uint64_t child = splitmix64_next(s);
    return Rng(child);
  }

  std::uint64_t next_u64() { return eng_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Unbiased integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw ConfigError("Rng::below: n must be positive");
    const std::uint64_t threshold = (0 - n) % n;  // 2^64 mod n
    for (;;) {
      std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  int below_int(int n) { return static_cast<int>(below(static_cast<std::uint64_t>(n))); }

  // Standard normal via Box-Muller; the paired value is cached.
  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(a);
    have_cached_ = true;
    return r * std::cos(a);
  }

  // Gamma(shape, 1) for shape >= 1 (Marsaglia-Tsang).
  double gamma(double shape) {
    if (shape < 1.0) throw ConfigError("Rng::gamma: shape must be >= 1");
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform01();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  // First k positions of a Fisher-Yates shuffle of 0..n-1 (draw order).
  std::vector<int> sample_indices(int n, int k) {
    if (k < 0 || k > n) throw ConfigError("Rng::sample_indices: k out of range");
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i;
    for (int i = 0; i < k; ++i) {
      const int j = i + below_int(n - i);
      std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    return idx;
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
      const int j = below_int(i + 1);
      std::swap(v[i], v[j]);
    }
  }

private:
  std::uint64_t seed_;
  std::mt19937_64 eng_;
  bool have_cached_ = false;
  double cached_ = 0.0;
};

// Labels for the fixed stream layout hanging off a run's root seed.
namespace stream {
inline constexpr std::uint64_t data_train = 1;
inline constexpr std::uint64_t data_test = 2;
inline constexpr std::uint64_t init = 3;
inline constexpr std::uint64_t episodes = 4;
inline constexpr std::uint64_t eval = 5;
}  // namespace stream

}  // namespace osr
