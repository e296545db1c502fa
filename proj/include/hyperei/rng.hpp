#pragma once

#include <cstdint>
#include <random>

namespace hei {

// Deterministic randomness built on std::mt19937_64. The engine's output
// sequence is pinned by the standard; the distributions below are written
// out by hand so that results do not depend on the standard library
// implementation. Every consumer of randomness in this project goes through
// this class with an explicit seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // Uniform on {0, ..., n-1}, rejection-sampled so there is no modulo bias.
  std::uint64_t next_below(std::uint64_t n) {
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      const std::uint64_t r = eng_();
      if (r >= threshold) return r % n;
    }
  }

  // Uniform on [0, 1) with 53 random bits.
  double next_unit() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  double next_real(double lo, double hi) {
    return lo + (hi - lo) * next_unit();
  }

  // Fisher-Yates; used where an exact element count must be drawn without
  // replacement reproducibly.
  template <class RandomIt>
  void shuffle(RandomIt first, RandomIt last) {
    const auto n = last - first;
    for (auto i = n - 1; i > 0; --i) {
      const auto j = static_cast<decltype(i)>(next_below(static_cast<std::uint64_t>(i) + 1));
      std::swap(first[i], first[j]);
    }
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace hei
