#pragma once

#include <cstdint>
#include <random>

namespace fasam {

/// Deterministic random stream with a fixed draw contract.
///
/// Every sampler below consumes a documented number of raw mt19937_64 words,
/// so a test can replay an identical draw sequence against an independent
/// re-implementation:
///   - uniform01(): one word, top 53 bits mapped to [0, 1).
///   - normal(): two uniform01 draws u1, u2 (u1 forced away from zero),
///     returns sqrt(-2 ln u1) * cos(2 pi u2). No spare value is cached.
///   - poisson(rate): rate <= 0 returns 0 with no draws. For rate < 30 the
///     multiplicative method: count uniform01 draws until their product
///     drops below exp(-rate). For rate >= 30, one normal() draw n and the
///     value max(0, floor(rate + sqrt(rate) * n + 0.5)).
///   - uniform_int(n): one uniform01 draw scaled to {0, ..., n-1}.
///   - bernoulli(p): one uniform01 draw, true iff u < p.
///   - fork(): one raw word, used as the child's seed.
class RngStream {
public:
  explicit RngStream(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_word() { return engine_(); }

  double uniform01() {
    const std::uint64_t w = next_word() >> 11;  // top 53 bits
    return static_cast<double>(w) * (1.0 / 9007199254740992.0);  // / 2^53
  }

  double normal();
  long poisson(double rate);

  int uniform_int(int n);  // n >= 1, value in {0, ..., n-1}

  bool bernoulli(double p) { return uniform01() < p; }

  RngStream fork() { return RngStream(next_word()); }

private:
  std::mt19937_64 engine_;
};

/// Stable 64-bit mix for deriving per-item seeds from (seed, index) pairs.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace fasam
