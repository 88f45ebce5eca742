#pragma once

// Deterministic random number generation.
//
// The generator underlying every randomized component in this library is
// std::mt19937_64, whose output sequence is fixed by the C++ standard, so
// identical seeds produce identical 64-bit streams on every platform.
// Floating-point draws are derived from those integers with the explicit
// transforms below (never via std::*_distribution, whose output is
// implementation-defined):
//
//   uniform01:  u = (next() >> 11) * 2^-53            in [0, 1)
//   normal:     Box-Muller on two uniforms, values returned in pair order
//
// Sub-streams for parallel sampling are derived from a master seed with the
// splitmix64 finalizer: stream k uses seed mix(master ^ (k+1)*GOLDEN_GAMMA).

#include <cmath>
#include <cstdint>
#include <random>

namespace jensenkv {

namespace detail {

inline constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ull;

inline constexpr std::uint64_t splitmix64_mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace detail

// Seed for sub-stream `stream` of a master seed. Distinct streams are
// decorrelated; stream 0 differs from the master itself.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  return detail::splitmix64_mix(master ^ ((stream + 1) * detail::kGoldenGamma));
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform in [0, 1), 53 usable bits.
  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform01();
  }

  // Symmetric uniform in [-half_width, +half_width).
  double uniform_symmetric(double half_width) {
    return (uniform01() - 0.5) * (2.0 * half_width);
  }

  // Standard normal via Box-Muller; one transform yields two values.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform01();
    // Guard against log(0); maps the zero draw to the smallest positive value.
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  // Random sign, +1 or -1, from the top bit of the next output.
  int sign() { return (next_u64() >> 63) ? -1 : +1; }

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace jensenkv
