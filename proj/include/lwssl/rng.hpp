// Copyright (c) 2026 lwssl contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>

#include "lwssl/common.hpp"

namespace lwssl {

// Deterministic splitmix64 generator. Hand-rolled instead of <random> so that
// streams are reproducible across standard libraries and so that substreams
// can be derived functionally from (seed, tag) without serializing state.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0x9e3779b97f4a7c15ull) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Independent stream derived from this one's seed and a tag. Forking does
  // not advance this generator.
  Rng fork(std::uint64_t tag) const {
    Rng child(state_ ^ (tag * 0xd1342543de82ef95ull + 0x2545f4914f6cdd1dull));
    child.next_u64();
    return child;
  }
  Rng fork(const std::string& tag) const { return fork(hash64(tag)); }

  // Uniform in [0, 1) with 53 bits of randomness.
  double uniform() { return static_cast<double>(next_u64() >> 11) * (1.0 / 9007199254740992.0); }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0, bound) via rejection.
  std::uint64_t below(std::uint64_t bound) {
    if (bound == 0) throw ValueError("Rng::below: bound must be positive");
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
      std::uint64_t r = next_u64();
      if (r >= threshold) return r % bound;
    }
  }

  std::int64_t range(std::int64_t lo, std::int64_t hi_inclusive) {
    if (hi_inclusive < lo) throw ValueError("Rng::range: empty range");
    return lo + static_cast<std::int64_t>(below(static_cast<std::uint64_t>(hi_inclusive - lo + 1)));
  }

  // Box-Muller without the cached spare, so draws are position-independent.
  double normal(double mu = 0.0, double sigma = 1.0) {
    double u1 = 1.0 - uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    return mu + sigma * r * std::cos(6.283185307179586 * u2);
  }

 private:
  std::uint64_t state_;
};

}  // namespace lwssl
