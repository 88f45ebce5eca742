#pragma once

// Randomized Hadamard rotation. The implicit matrix is
// H = (1/sqrt(d)) * H_walsh * diag(signs), applied with a fast Walsh-Hadamard
// transform in O(d log d). H is orthogonal, so inner products and norms are
// preserved while per-channel outlier energy is spread across channels.

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "jensenkv/rng.hpp"

namespace jensenkv {

inline bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

class HadamardRotation {
 public:
  HadamardRotation(int d, std::uint64_t seed) : d_(d), seed_(seed), signs_(d) {
    if (!is_power_of_two(d))
      throw std::invalid_argument("HadamardRotation: d must be a power of two");
    Rng rng(seed);
    for (int i = 0; i < d; ++i) signs_[i] = rng.sign();
    inv_sqrt_d_ = 1.0 / std::sqrt(static_cast<double>(d));
  }

  int dim() const { return d_; }
  std::uint64_t seed() const { return seed_; }
  std::span<const int> signs() const { return signs_; }

  // y = H x, in place.
  template <typename T>
  void rotate_inplace(std::span<T> x) const {
    if (x.size() != static_cast<std::size_t>(d_))
      throw std::invalid_argument("rotate: length mismatch");
    for (int i = 0; i < d_; ++i)
      x[i] = static_cast<T>(signs_[i] > 0 ? x[i] : -x[i]);
    // Unnormalized Walsh-Hadamard butterflies.
    for (int h = 1; h < d_; h <<= 1) {
      for (int i = 0; i < d_; i += h << 1) {
        for (int j = i; j < i + h; ++j) {
          const T a = x[j];
          const T b = x[j + h];
          x[j] = a + b;
          x[j + h] = a - b;
        }
      }
    }
    for (int i = 0; i < d_; ++i) x[i] = static_cast<T>(x[i] * inv_sqrt_d_);
  }

  template <typename T>
  std::vector<T> rotate(std::span<const T> x) const {
    std::vector<T> y(x.begin(), x.end());
    rotate_inplace(std::span<T>(y));
    return y;
  }

  // Rotate each row of a row-major n x d matrix in place.
  template <typename T>
  void rotate_rows_inplace(std::span<T> data, int n) const {
    if (data.size() != static_cast<std::size_t>(n) * d_)
      throw std::invalid_argument("rotate_rows: shape mismatch");
    for (int i = 0; i < n; ++i)
      rotate_inplace(data.subspan(static_cast<std::size_t>(i) * d_, static_cast<std::size_t>(d_)));
  }

 private:
  int d_;
  std::uint64_t seed_;
  std::vector<int> signs_;
  double inv_sqrt_d_;
};

inline HadamardRotation build_rotation(int d, std::uint64_t seed) {
  return HadamardRotation(d, seed);
}

}  // namespace jensenkv
