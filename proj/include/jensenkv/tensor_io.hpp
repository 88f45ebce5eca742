#pragma once

// JKVT tensor file format, bit-exact contract:
//   magic   4 bytes  "JKVT"
//   version u8       1
//   dtype   u8       0 = 32-bit float
//   ndim    u8
//   reserved u8      0
//   dims    ndim * u64, little-endian
//   payload row-major, little-endian
// Readers reject unknown versions and dtypes.

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>
#include <vector>

#include "jensenkv/matrix.hpp"

namespace jensenkv {

struct Tensor {
  std::vector<std::uint64_t> dims;
  std::vector<float> data;

  std::uint64_t elem_count() const {
    std::uint64_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }
};

class TensorIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void put_u64_le(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

inline std::uint64_t get_u64_le(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

inline std::uint32_t float_bits_le(float f) {
  std::uint32_t u;
  std::memcpy(&u, &f, 4);
  return u;
}

}  // namespace detail

inline void write_tensor(const std::filesystem::path& path, const Tensor& t) {
  std::vector<std::uint8_t> buf;
  buf.reserve(8 + t.dims.size() * 8 + t.data.size() * 4);
  buf.push_back('J');
  buf.push_back('K');
  buf.push_back('V');
  buf.push_back('T');
  buf.push_back(1);  // version
  buf.push_back(0);  // dtype f32
  buf.push_back(static_cast<std::uint8_t>(t.dims.size()));
  buf.push_back(0);  // reserved
  for (auto d : t.dims) detail::put_u64_le(buf, d);
  if (t.data.size() != t.elem_count())
    throw TensorIoError("write_tensor: payload length does not match dims");
  for (float f : t.data) {
    const std::uint32_t u = detail::float_bits_le(f);
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<std::uint8_t>((u >> (8 * i)) & 0xFF));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw TensorIoError("write_tensor: cannot open " + path.string());
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw TensorIoError("write_tensor: short write to " + path.string());
}

inline Tensor read_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw TensorIoError("read_tensor: cannot open " + path.string());
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
  if (buf.size() < 8 || buf[0] != 'J' || buf[1] != 'K' || buf[2] != 'V' || buf[3] != 'T')
    throw TensorIoError("read_tensor: bad magic in " + path.string());
  if (buf[4] != 1) throw TensorIoError("read_tensor: unsupported version");
  if (buf[5] != 0) throw TensorIoError("read_tensor: unsupported dtype");
  const std::size_t ndim = buf[6];
  std::size_t off = 8;
  if (buf.size() < off + ndim * 8) throw TensorIoError("read_tensor: truncated header");
  Tensor t;
  t.dims.resize(ndim);
  for (std::size_t i = 0; i < ndim; ++i, off += 8) t.dims[i] = detail::get_u64_le(&buf[off]);
  const std::uint64_t n = t.elem_count();
  if (buf.size() != off + n * 4)
    throw TensorIoError("read_tensor: payload length mismatch in " + path.string());
  t.data.resize(n);
  for (std::uint64_t i = 0; i < n; ++i, off += 4) {
    std::uint32_t u = 0;
    for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(buf[off + b]) << (8 * b);
    float f;
    std::memcpy(&f, &u, 4);
    t.data[i] = f;
  }
  return t;
}

inline Tensor tensor_from_matrix(const MatrixF& m) {
  Tensor t;
  t.dims = {static_cast<std::uint64_t>(m.rows), static_cast<std::uint64_t>(m.cols)};
  t.data = m.data;
  return t;
}

// Stack of per-head matrices as one [H, rows, cols] tensor.
inline Tensor tensor_from_heads(const std::vector<MatrixF>& heads) {
  if (heads.empty()) throw TensorIoError("tensor_from_heads: no heads");
  Tensor t;
  t.dims = {heads.size(), static_cast<std::uint64_t>(heads[0].rows),
            static_cast<std::uint64_t>(heads[0].cols)};
  for (const auto& m : heads) {
    if (m.rows != heads[0].rows || m.cols != heads[0].cols)
      throw TensorIoError("tensor_from_heads: ragged heads");
    t.data.insert(t.data.end(), m.data.begin(), m.data.end());
  }
  return t;
}

inline std::vector<MatrixF> heads_from_tensor(const Tensor& t) {
  if (t.dims.size() != 3) throw TensorIoError("heads_from_tensor: want 3 dims [H, rows, cols]");
  const int H = static_cast<int>(t.dims[0]);
  const int rows = static_cast<int>(t.dims[1]);
  const int cols = static_cast<int>(t.dims[2]);
  std::vector<MatrixF> heads;
  heads.reserve(static_cast<std::size_t>(H));
  const std::size_t per_head = static_cast<std::size_t>(rows) * cols;
  for (int h = 0; h < H; ++h) {
    MatrixF m(rows, cols);
    std::copy(t.data.begin() + static_cast<std::ptrdiff_t>(h * per_head),
              t.data.begin() + static_cast<std::ptrdiff_t>((h + 1) * per_head), m.data.begin());
    heads.push_back(std::move(m));
  }
  return heads;
}

}  // namespace jensenkv
