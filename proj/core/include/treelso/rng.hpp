#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "treelso/errors.hpp"

namespace treelso {

// Deterministic random source. mt19937_64 output is pinned by the standard;
// all conversions to doubles/indices are done here by hand so that streams
// are bit-identical across platforms and standard library versions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 bits of mantissa.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Unbiased uniform index in [0, n) via rejection sampling.
  std::size_t index(std::size_t n) {
    require(n > 0, "Rng::index: n must be positive");
    const std::uint64_t span = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    std::uint64_t v = engine_();
    while (v >= limit) v = engine_();
    return static_cast<std::size_t>(v % span);
  }

  // Samples an index proportionally to the given non-negative weights.
  std::size_t weighted_index(const std::vector<double>& weights) {
    require(!weights.empty(), "Rng::weighted_index: empty weights");
    double total = 0.0;
    for (double w : weights) {
      require(w >= 0.0, "Rng::weighted_index: negative weight");
      total += w;
    }
    require(total > 0.0, "Rng::weighted_index: all weights zero");
    double u = uniform01() * total;
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
      acc += weights[i];
      if (u < acc) return i;
    }
    return weights.size() - 1;
  }

  // Independent child stream; keyed so sibling streams do not collide.
  Rng derive(std::uint64_t key) {
    std::uint64_t s = next_u64();
    s ^= key * 0x9E3779B97F4A7C15ULL;
    return Rng(s);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace treelso
