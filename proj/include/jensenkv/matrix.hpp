#pragma once

// Minimal row-major matrix containers used across the engine and harness.

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace jensenkv {

template <typename T>
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<T> data;

  Matrix() = default;
  Matrix(int r, int c, T fill = T(0))
      : rows(r), cols(c), data(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), fill) {
    if (r < 0 || c < 0) throw std::invalid_argument("Matrix: negative shape");
  }

  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }

  T& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  const T& at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

  std::span<T> row(int r) {
    return std::span<T>(data).subspan(static_cast<std::size_t>(r) * cols,
                                      static_cast<std::size_t>(cols));
  }
  std::span<const T> row(int r) const {
    return std::span<const T>(data).subspan(static_cast<std::size_t>(r) * cols,
                                            static_cast<std::size_t>(cols));
  }
};

using MatrixF = Matrix<float>;
using MatrixD = Matrix<double>;

inline MatrixD to_double(const MatrixF& m) {
  MatrixD out(m.rows, m.cols);
  for (std::size_t i = 0; i < m.data.size(); ++i) out.data[i] = m.data[i];
  return out;
}

inline MatrixF to_float(const MatrixD& m) {
  MatrixF out(m.rows, m.cols);
  for (std::size_t i = 0; i < m.data.size(); ++i) out.data[i] = static_cast<float>(m.data[i]);
  return out;
}

}  // namespace jensenkv
