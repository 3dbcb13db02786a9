#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "fedrel/error.hpp"

namespace fedrel {

/// splitmix64 finalizer; used to derive independent seed streams.
constexpr std::uint64_t split_mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// Derives a child seed from a master seed and up to two path components
/// (stream tag, participant id, ...). Distinct paths give decorrelated streams,
/// so independent consumers never share draws.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a,
                                    std::uint64_t b = 0) {
  return split_mix(split_mix(split_mix(master) ^ a) ^ b);
}

/// Deterministic random source. The engine is std::mt19937_64 (bit-exact by
/// the standard); all distributions are generated here rather than through
/// std::*_distribution, whose output is implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform01();
  }

  /// Unbiased integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n) {
    if (n == 0) throw NumericError("uniform_index: empty range");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = gen_();
    } while (x >= limit);
    return x % n;
  }

  /// Standard normal draw (Box-Muller, cosine branch only so the generator
  /// carries no hidden pair state).
  double gaussian() {
    const double u1 = 1.0 - uniform01();  // (0, 1]
    const double u2 = uniform01();
    constexpr double two_pi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
  }

  /// Gamma(alpha, 1) via Marsaglia-Tsang squeeze, boosted for alpha < 1.
  double gamma(double alpha) {
    if (!(alpha > 0.0)) throw NumericError("gamma: alpha must be positive");
    if (alpha < 1.0) {
      const double u = 1.0 - uniform01();  // (0, 1]
      return gamma(alpha + 1.0) * std::pow(u, 1.0 / alpha);
    }
    const double d = alpha - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = gaussian();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = 1.0 - uniform01();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  /// Symmetric Dirichlet draw of dimension n.
  std::vector<double> dirichlet(double alpha, std::size_t n) {
    std::vector<double> g(n);
    double total = 0.0;
    for (auto& v : g) {
      v = gamma(alpha);
      total += v;
    }
    if (total <= 0.0) {
      // All-zero underflow is possible for very small alpha; fall back to a
      // single random vertex of the simplex.
      std::fill(g.begin(), g.end(), 0.0);
      g[uniform_index(n)] = 1.0;
      return g;
    }
    for (auto& v : g) v /= total;
    return g;
  }

  /// Fisher-Yates shuffle driven by uniform_index.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[uniform_index(i)]);
    }
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace fedrel
