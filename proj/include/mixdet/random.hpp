// Copyright (c) 2026 the mixdet authors. Licensed under the Apache License 2.0.

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace mixdet {

/// @brief splitmix64 mixing step. Standard finalizer; good avalanche, cheap.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// @brief Derive an independent seed for a named sub-stream.
///
/// Every consumer that needs its own reproducible randomness (parameter init,
/// batch sampling, per-image data generation, ...) seeds a fresh engine with
/// derive_seed(master, stream_tag) instead of sharing one engine. That way
/// adding draws to one consumer never perturbs another.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(seed ^ splitmix64(stream));
}

/// @brief FNV-1a hash for turning short names into stream tags.
inline std::uint64_t stream_tag(const char* name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char* p = name; *p; ++p) h = (h ^ static_cast<unsigned char>(*p)) * 0x100000001b3ULL;
  return h;
}

/// @brief Deterministic random engine: mt19937_64 plus hand-rolled
/// distribution transforms.
///
/// The standard library's distribution objects produce implementation-defined
/// sequences and may buffer internal state, which would break both pinned test
/// vectors and checkpoint resume (we serialize only the engine). The
/// transforms below are fixed algorithms over the standard-pinned mt19937_64
/// stream, so every draw is reproducible bit for bit and the engine state is
/// the complete RNG state.
class RandomEngine {
 public:
  explicit RandomEngine(std::uint64_t seed = 0) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). Lemire multiply-shift; bias is O(2^-64).
  std::uint64_t uniform_int(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(gen_()) * n) >> 64);
  }

  /// Standard normal draw via Box-Muller. The sine branch is discarded so the
  /// engine state stays a pure function of the number of draws taken.
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]; log() is safe
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return r * std::cos(2.0 * kPi * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Gamma(alpha, 1) via Marsaglia-Tsang squeeze (alpha >= 1) with the
  /// standard U^(1/alpha) boost for alpha < 1.
  double gamma(double alpha) {
    if (alpha < 1.0) {
      const double u = 1.0 - uniform();  // (0, 1]
      return gamma(alpha + 1.0) * std::pow(u, 1.0 / alpha);
    }
    const double d = alpha - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = 1.0 - uniform();
      const double x2 = x * x;
      if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
      if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  /// Beta(a, b) as g_a / (g_a + g_b).
  double beta(double a, double b) {
    const double g1 = gamma(a);
    const double g2 = gamma(b);
    const double s = g1 + g2;
    if (s <= 0.0) return 0.5;  // both gammas underflowed; alpha was tiny
    return g1 / s;
  }

  /// Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  /// Serialize engine state as text (lossless; mt19937_64 stream operators).
  std::string state() const {
    std::ostringstream os;
    os << gen_;
    return os.str();
  }

  void set_state(const std::string& s) {
    std::istringstream is(s);
    is >> gen_;
  }

 private:
  static constexpr double kPi = 3.14159265358979323846;
  std::mt19937_64 gen_;
};

}  // namespace mixdet
