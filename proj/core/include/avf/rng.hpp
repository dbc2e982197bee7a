#pragma once

#include <algorithm>
#include <cstdint>
#include <random>

namespace avf {

/// Deterministic RNG stream. Every consumer owns its own stream, seeded by
/// hashing (base_seed, stream_id), so per-sample work is order-independent.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  double uniform(double lo = 0.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(eng_);
  }
  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(eng_);
  }
  /// Inclusive bounds.
  int uniform_int(int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(eng_);
  }
  bool bernoulli(double p) { return std::bernoulli_distribution(p)(eng_); }
  std::uint64_t next() { return eng_(); }

  template <typename It>
  void shuffle(It first, It last) {
    std::shuffle(first, last, eng_);
  }

  /// SplitMix64-style combine, for deriving per-sample seeds.
  static std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::mt19937_64& engine() { return eng_; }

 private:
  std::mt19937_64 eng_;
};

}  // namespace avf
