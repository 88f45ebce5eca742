#pragma once

// Bit packing for low-bitwidth integer codes.
//
// Layout contract (stable): codes are packed little-endian within each byte.
// With width B, code i occupies bits [B*(i mod (8/B)), B*(i mod (8/B)) + B)
// of byte i / (8/B). B=16 codes are stored as two little-endian bytes.

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace jensenkv {

inline bool is_packable_width(int bits) {
  return bits == 2 || bits == 4 || bits == 8 || bits == 16;
}

// Smallest supported packed slot that holds B-bit codes.
inline int packed_width(int bits) {
  if (bits <= 2) return 2;
  if (bits <= 4) return 4;
  if (bits <= 8) return 8;
  return 16;
}

inline std::size_t packed_size_bytes(std::size_t n_codes, int width) {
  if (width == 16) return n_codes * 2;
  const std::size_t per_byte = 8 / static_cast<std::size_t>(width);
  return (n_codes + per_byte - 1) / per_byte;
}

// Append `codes` to `out`, starting at code slot `slot_offset` (codes already
// stored in `out`). Slots never straddle bytes, so appends are cheap.
inline void pack_codes_append(std::span<const std::uint32_t> codes, int width,
                              std::size_t slot_offset, std::vector<std::uint8_t>& out) {
  if (!is_packable_width(width))
    throw std::invalid_argument("pack_codes: width must be one of {2,4,8,16}");
  const std::uint32_t max_code = (width == 16) ? 0xFFFFu : ((1u << width) - 1u);
  out.resize(packed_size_bytes(slot_offset + codes.size(), width), 0);
  if (width == 16) {
    for (std::size_t i = 0; i < codes.size(); ++i) {
      if (codes[i] > max_code)
        throw std::out_of_range("pack_codes: code " + std::to_string(codes[i]) +
                                " out of range for width " + std::to_string(width));
      const std::size_t b = (slot_offset + i) * 2;
      out[b] = static_cast<std::uint8_t>(codes[i] & 0xFF);
      out[b + 1] = static_cast<std::uint8_t>(codes[i] >> 8);
    }
    return;
  }
  const std::size_t per_byte = 8 / static_cast<std::size_t>(width);
  for (std::size_t i = 0; i < codes.size(); ++i) {
    if (codes[i] > max_code)
      throw std::out_of_range("pack_codes: code " + std::to_string(codes[i]) +
                              " out of range for width " + std::to_string(width));
    const std::size_t slot = slot_offset + i;
    const std::size_t byte = slot / per_byte;
    const unsigned shift = static_cast<unsigned>(width) * (slot % per_byte);
    out[byte] = static_cast<std::uint8_t>(out[byte] | (codes[i] << shift));
  }
}

inline std::vector<std::uint8_t> pack_codes(std::span<const std::uint32_t> codes, int width) {
  std::vector<std::uint8_t> out;
  pack_codes_append(codes, width, 0, out);
  return out;
}

// Unpack `n` codes starting at code slot `slot_offset`.
inline std::vector<std::uint32_t> unpack_codes(std::span<const std::uint8_t> bytes,
                                               std::size_t n, int width,
                                               std::size_t slot_offset = 0) {
  if (!is_packable_width(width))
    throw std::invalid_argument("unpack_codes: width must be one of {2,4,8,16}");
  if (packed_size_bytes(slot_offset + n, width) > bytes.size())
    throw std::out_of_range("unpack_codes: byte buffer too small");
  std::vector<std::uint32_t> codes(n);
  if (width == 16) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t b = (slot_offset + i) * 2;
      codes[i] = static_cast<std::uint32_t>(bytes[b]) |
                 (static_cast<std::uint32_t>(bytes[b + 1]) << 8);
    }
    return codes;
  }
  const std::size_t per_byte = 8 / static_cast<std::size_t>(width);
  const std::uint32_t mask = (1u << width) - 1u;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t slot = slot_offset + i;
    const std::size_t byte = slot / per_byte;
    const unsigned shift = static_cast<unsigned>(width) * (slot % per_byte);
    codes[i] = (static_cast<std::uint32_t>(bytes[byte]) >> shift) & mask;
  }
  return codes;
}

}  // namespace jensenkv
