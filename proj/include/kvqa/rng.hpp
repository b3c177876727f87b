#pragma once

#include <cstdint>
#include <utility>
#include <vector>

namespace kvqa {

// Deterministic 64-bit generator (splitmix64 core). All seeded behaviour in
// this project goes through this class instead of <random> distributions,
// whose output is implementation-defined and would break manifest replay
// across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Unbiased integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      const std::uint64_t r = next();
      if (r >= threshold) return r % n;
    }
  }

  // Uniform double in [0, 1) with 53 random bits.
  double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }

  // In-place Fisher-Yates. The loop direction and swap rule are part of the
  // reproducibility contract; do not change them.
  template <typename T>
  void shuffle(std::vector<T>& values) {
    if (values.size() < 2) return;
    for (std::size_t i = values.size() - 1; i > 0; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i + 1));
      std::swap(values[i], values[j]);
    }
  }

  // Independent substream for (seed, tag) pairs, e.g. one per episode.
  static Rng derive(std::uint64_t seed, std::uint64_t tag) {
    Rng mixer(seed ^ (0x9e3779b97f4a7c15ULL * (tag + 1)));
    return Rng(mixer.next());
  }

 private:
  std::uint64_t state_;
};

}  // namespace kvqa
