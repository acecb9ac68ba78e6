#pragma once

#include <cstdint>

namespace bspft {

// SplitMix64. Stateless streams keyed by (seed, a, b) make every random draw
// a pure function of its coordinates, so re-executing a superstep after a
// rollback reproduces it bit for bit.
class SplitMix64 {
 public:
  constexpr explicit SplitMix64(std::uint64_t state) noexcept : state_(state) {}

  constexpr std::uint64_t next() noexcept {
    state_ += 0x9E3779B97F4A7C15ull;
    return finalize(state_);
  }

  // [0, 1) with 53 random bits.
  constexpr double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  constexpr double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  // Uniform in [0, n) by rejection; n > 0.
  constexpr std::uint64_t below(std::uint64_t n) noexcept {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do {
      x = next();
    } while (x >= limit);
    return x % n;
  }

  static constexpr std::uint64_t finalize(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  static constexpr SplitMix64 stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b) noexcept {
    std::uint64_t s = finalize(seed + 0x9E3779B97F4A7C15ull);
    s = finalize(s ^ (a + 0x632BE59BD9B4E019ull));
    s = finalize(s ^ (b + 0x85157AF5D6E9A4F1ull));
    return SplitMix64(s);
  }

 private:
  std::uint64_t state_;
};

}  // namespace bspft
