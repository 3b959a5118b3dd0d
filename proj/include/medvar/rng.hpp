#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "medvar/errors.hpp"

namespace medvar {

// Counter-based pseudo-random generator built on the splitmix64 finalizer.
//
// Draw k from stream `key` is a pure function of (key, k), so any draw can be
// produced without generating its predecessors, and substreams derived from
// distinct tag tuples are statistically unrelated. This is what makes
// bootstrap draw b and simulation replication r reproducible in isolation and
// immune to thread scheduling: workers own disjoint streams and never share
// generator state.
class CounterRng {
 public:
  CounterRng() : key_(0) {}
  explicit CounterRng(std::uint64_t key) : key_(key) {}

  // splitmix64 finalizer; full-avalanche mix of a 64-bit word.
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Derives a substream key from a root seed and up to three stream tags.
  // Chained mixing keeps distinct (seed, a, b, c) tuples on distinct streams.
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t a,
                              std::uint64_t b = 0, std::uint64_t c = 0) {
    std::uint64_t k = mix(seed);
    k = mix(k + a);
    k = mix(k + b);
    k = mix(k + c);
    return k;
  }

  static CounterRng stream(std::uint64_t seed, std::uint64_t a,
                           std::uint64_t b = 0, std::uint64_t c = 0) {
    return CounterRng(derive(seed, a, b, c));
  }

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64() { return mix(key_ + 0x9E3779B97F4A7C15ULL * ++counter_); }

  // Uniform on the open interval (0,1); safe to feed into inverse CDFs.
  double uniform() {
    return (static_cast<double>(next_u64() >> 12) + 0.5) * 0x1.0p-52;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller without caching: two uniforms per normal, so the draw count
  // per call is fixed and streams stay aligned across code paths.
  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return r * std::cos(6.283185307179586476925286766559 * u2);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  // Standard logistic via inverse CDF.
  double logistic() {
    const double u = uniform();
    return std::log(u) - std::log1p(-u);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Index draw proportional to `weights` (nonnegative, not necessarily
  // normalized). Walks the cumulative sum so a single uniform decides.
  int categorical(const std::vector<double>& weights) {
    double total = 0.0;
    for (double w : weights) {
      if (!(w >= 0.0)) throw NumericError("categorical draw: negative weight");
      total += w;
    }
    if (!(total > 0.0)) throw NumericError("categorical draw: zero total weight");
    const double u = uniform() * total;
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
      acc += weights[i];
      if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(weights.size()) - 1;
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

// Fixed stream tags. Every consumer of randomness draws from its own branch
// of the seed tree so adding draws in one place never shifts another.
namespace rng_stream {
inline constexpr std::uint64_t kScenarioParameters = 1;
inline constexpr std::uint64_t kReplication = 2;
inline constexpr std::uint64_t kBootstrapOutcome = 3;
inline constexpr std::uint64_t kBootstrapMediator = 4;
inline constexpr std::uint64_t kBootstrapAssignment = 5;
inline constexpr std::uint64_t kOracle = 6;
inline constexpr std::uint64_t kBootstrapEffects = 7;
}  // namespace rng_stream

}  // namespace medvar
