#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace sfkt {

/// Deterministic random source. Wraps the mt19937_64 engine (whose raw output
/// sequence is fully specified by the standard) and maps to uniforms by hand;
/// std::uniform_*_distribution is implementation-defined and would break
/// run-to-run reproducibility guarantees across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform double in [0, 1) with 53 bits of precision.
  double next_double() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  /// Uniform integer in [0, bound). bound must be nonzero.
  std::uint64_t next_below(std::uint64_t bound) {
    // Rejection sampling over the largest multiple of bound below 2^64.
    const std::uint64_t limit = std::uint64_t(0) - (std::uint64_t(0) - bound) % bound;
    std::uint64_t x = engine_();
    while (limit != 0 && x >= limit) x = engine_();
    return x % bound;
  }

  /// Uniform double in [lo, hi).
  double next_range(double lo, double hi) {
    return lo + (hi - lo) * next_double();
  }

  bool next_bernoulli(double p) { return next_double() < p; }

 private:
  std::mt19937_64 engine_;
};

/// Fisher-Yates shuffle driven by Rng, for the same reproducibility reason:
/// std::shuffle's draw pattern is implementation-defined.
template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[rng.next_below(i)]);
  }
}

/// Stable derivation of auxiliary RNG streams (per-epoch shuffling, dropout)
/// from the run seed, via splitmix64 steps over seed and tags.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream,
                                 std::uint64_t epoch = 0) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(seed) ^ stream) ^ epoch);
}

}  // namespace sfkt
