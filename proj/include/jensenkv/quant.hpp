#pragma once

// Asymmetric round-to-nearest integer quantization of token vectors with
// group-wise scales and zero-points, plus the packed storage block.
//
// Grid convention: code = clamp(rne(x/delta + z), 0, 2^B - 1), reconstructed
// as (code - z) * delta. The group range is zero-inclusive
// ([min(0,min x), max(0,max x)]) and the zero-point is real-valued (stored in
// the configured metadata format, not rounded to an integer). The stored,
// format-rounded delta is the one used everywhere downstream.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "jensenkv/formats.hpp"
#include "jensenkv/packing.hpp"

namespace jensenkv {

enum class Granularity { kPerTokenGrouped, kPerChannel };
enum class ScaleFormat { kFp8E4M3, kFullPrecision };
enum class ZeroPointFormat { kBf16, kFullPrecision };

struct QuantSpec {
  int bits = 2;              // 2..16; packed widths are {2,4,8,16}
  int group_size = 32;       // must divide the dimension being grouped
  Granularity granularity = Granularity::kPerTokenGrouped;
  ScaleFormat scale_format = ScaleFormat::kFp8E4M3;
  ZeroPointFormat zeropoint_format = ZeroPointFormat::kBf16;
  bool rotation = false;
  std::uint64_t seed = 1;

  void validate() const {
    if (bits < 2 || bits > 16)
      throw std::invalid_argument("QuantSpec: bits must be in [2,16]");
    if (group_size < 1) throw std::invalid_argument("QuantSpec: group_size must be >= 1");
  }
};

struct GroupParams {
  double delta = 1.0;       // step size, >= 0; exactly representable in scale_format
  double zero_point = 0.0;  // real-valued, in code units
};

// Metadata bits per group: 8 (FP8 scale) + 16 (BF16 zero-point).
// Bits per element amortized over a group of size g.
inline double effective_bitwidth(int bits, int group_size) {
  if (group_size < 1) throw std::invalid_argument("effective_bitwidth: group_size must be >= 1");
  return static_cast<double>(bits) + 24.0 / static_cast<double>(group_size);
}

inline double apply_scale_format(double delta, ScaleFormat f) {
  switch (f) {
    case ScaleFormat::kFp8E4M3: {
      double d = emulate_fp8_e4m3(delta);
      // A positive range must keep a positive step; the smallest FP8 value
      // stands in when the ideal step underflows the format.
      if (d == 0.0 && delta > 0.0) d = fp8_e4m3_min_positive();
      return d;
    }
    case ScaleFormat::kFullPrecision:
      return static_cast<double>(static_cast<float>(delta));
  }
  return delta;
}

inline double apply_zeropoint_format(double z, ZeroPointFormat f) {
  switch (f) {
    case ZeroPointFormat::kBf16:
      return emulate_bf16(z);
    case ZeroPointFormat::kFullPrecision:
      return static_cast<double>(static_cast<float>(z));
  }
  return z;
}

// Range covering [min(0, min x), max(0, max x)]; the all-zero group takes the
// (delta=1, z=0) convention so it reconstructs exactly.
inline GroupParams compute_group_params(std::span<const double> x, int bits,
                                        ScaleFormat scale_format = ScaleFormat::kFullPrecision,
                                        ZeroPointFormat zeropoint_format = ZeroPointFormat::kFullPrecision) {
  if (x.empty()) throw std::invalid_argument("compute_group_params: empty group");
  if (bits < 2 || bits > 16) throw std::invalid_argument("compute_group_params: bits must be in [2,16]");
  double lo = 0.0, hi = 0.0;
  for (double v : x) {
    if (!std::isfinite(v)) throw std::invalid_argument("compute_group_params: non-finite input");
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  GroupParams p;
  if (hi == lo) {  // all-zero group (lo <= 0 <= hi forces lo == hi == 0)
    p.delta = 1.0;
    p.zero_point = 0.0;
    return p;
  }
  const double levels = static_cast<double>((1u << bits) - 1u);
  const double delta = (hi - lo) / levels;
  const double z = -lo / delta;
  p.delta = apply_scale_format(delta, scale_format);
  p.zero_point = apply_zeropoint_format(z, zeropoint_format);
  return p;
}

// code = clamp(rne(x/delta + z), 0, 2^B - 1)
inline std::vector<std::uint32_t> quantize(std::span<const double> x, const GroupParams& p, int bits) {
  if (bits < 2 || bits > 16) throw std::invalid_argument("quantize: bits must be in [2,16]");
  const double max_code = static_cast<double>((1u << bits) - 1u);
  std::vector<std::uint32_t> codes(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i])) throw std::invalid_argument("quantize: non-finite input");
    if (p.delta == 0.0) {
      if (x[i] != 0.0)
        throw std::invalid_argument("quantize: delta == 0 with nonzero input");
      codes[i] = 0;
      continue;
    }
    double c = std::nearbyint(x[i] / p.delta + p.zero_point);
    c = std::clamp(c, 0.0, max_code);
    codes[i] = static_cast<std::uint32_t>(c);
  }
  return codes;
}

// x_hat = (code - z) * delta
inline std::vector<double> dequantize(std::span<const std::uint32_t> codes, const GroupParams& p) {
  std::vector<double> x(codes.size());
  for (std::size_t i = 0; i < codes.size(); ++i)
    x[i] = (static_cast<double>(codes[i]) - p.zero_point) * p.delta;
  return x;
}

// Packed block of quantized token vectors.
//
// Per-token-grouped: each token's d channels split into G = d/g groups, one
// GroupParams per (token, group), params row-major token x group.
// Per-channel: channels split into d/g groups whose params are shared by all
// tokens; statistics are taken over every token in the written chunk, so a
// per-channel block accepts exactly one chunk.
class QuantizedTokenBlock {
 public:
  QuantizedTokenBlock(const QuantSpec& spec, int d)
      : spec_(spec), d_(d), width_(packed_width(spec.bits)) {
    spec_.validate();
    if (d < 1) throw std::invalid_argument("QuantizedTokenBlock: d must be >= 1");
    if (d % spec.group_size != 0)
      throw std::invalid_argument("QuantizedTokenBlock: group_size must divide d");
  }

  int n_tokens() const { return n_tokens_; }
  int dim() const { return d_; }
  int group_size() const { return spec_.group_size; }
  int groups_per_token() const { return d_ / spec_.group_size; }
  int bits() const { return spec_.bits; }
  const QuantSpec& spec() const { return spec_; }
  Granularity granularity() const { return spec_.granularity; }
  const std::vector<std::uint8_t>& packed_codes() const { return codes_; }
  const std::vector<GroupParams>& params() const { return params_; }

  // Quantize a chunk of tokens (row-major n x d) and append it.
  void append(std::span<const double> tokens, int n) {
    if (n < 1) throw std::invalid_argument("append: need at least one token");
    if (tokens.size() != static_cast<std::size_t>(n) * d_)
      throw std::invalid_argument("append: shape mismatch");
    if (spec_.granularity == Granularity::kPerChannel) {
      if (n_tokens_ > 0)
        throw std::invalid_argument("append: per-channel blocks accept a single chunk");
      append_per_channel(tokens, n);
    } else {
      append_per_token(tokens, n);
    }
  }

  // Parameters of group j of token i (token index ignored for per-channel).
  const GroupParams& group_params(int token, int group) const {
    if (spec_.granularity == Granularity::kPerChannel)
      return params_[static_cast<std::size_t>(group)];
    return params_[static_cast<std::size_t>(token) * groups_per_token() + group];
  }

  // Step size of every group of token i, in group order.
  std::vector<double> token_group_deltas(int token) const {
    const int G = groups_per_token();
    std::vector<double> out(G);
    for (int j = 0; j < G; ++j) out[j] = group_params(token, j).delta;
    return out;
  }

  // Dequantize the whole block, row-major n_tokens x d.
  std::vector<double> dequantize_all() const {
    std::vector<double> out(static_cast<std::size_t>(n_tokens_) * d_);
    const int g = spec_.group_size;
    const int G = groups_per_token();
    for (int i = 0; i < n_tokens_; ++i) {
      const std::size_t token_slot = static_cast<std::size_t>(i) * d_;
      auto codes = unpack_codes(codes_, static_cast<std::size_t>(d_), width_, token_slot);
      for (int j = 0; j < G; ++j) {
        const GroupParams& p = group_params(i, j);
        for (int c = 0; c < g; ++c) {
          const std::size_t idx = static_cast<std::size_t>(j) * g + c;
          out[token_slot + idx] = (static_cast<double>(codes[idx]) - p.zero_point) * p.delta;
        }
      }
    }
    return out;
  }

  // Logical storage footprint: payload plus per-group metadata. Metadata is
  // 24 bits/group for the emulated formats, 64 bits/group otherwise. Codes
  // are accounted at their packed slot width.
  std::uint64_t stored_bits() const {
    const std::uint64_t payload =
        static_cast<std::uint64_t>(n_tokens_) * d_ * static_cast<std::uint64_t>(width_);
    const bool emulated = spec_.scale_format == ScaleFormat::kFp8E4M3 &&
                          spec_.zeropoint_format == ZeroPointFormat::kBf16;
    const std::uint64_t per_group = emulated ? 24 : 64;
    return payload + per_group * params_.size();
  }

  // Build a block from explicit parts (tests, file loading).
  static QuantizedTokenBlock from_parts(const QuantSpec& spec, int d, int n_tokens,
                                        std::vector<std::uint8_t> packed,
                                        std::vector<GroupParams> params) {
    QuantizedTokenBlock b(spec, d);
    const std::size_t want_params =
        spec.granularity == Granularity::kPerChannel
            ? static_cast<std::size_t>(d / spec.group_size)
            : static_cast<std::size_t>(n_tokens) * (d / spec.group_size);
    if (params.size() != want_params)
      throw std::invalid_argument("from_parts: param count mismatch");
    if (packed.size() < packed_size_bytes(static_cast<std::size_t>(n_tokens) * d, b.width_))
      throw std::invalid_argument("from_parts: packed payload too small");
    b.n_tokens_ = n_tokens;
    b.codes_ = std::move(packed);
    b.params_ = std::move(params);
    return b;
  }

 private:
  void append_per_token(std::span<const double> tokens, int n) {
    const int g = spec_.group_size;
    const int G = groups_per_token();
    std::vector<std::uint32_t> chunk_codes;
    chunk_codes.reserve(static_cast<std::size_t>(n) * d_);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < G; ++j) {
        auto group = tokens.subspan(static_cast<std::size_t>(i) * d_ + static_cast<std::size_t>(j) * g,
                                    static_cast<std::size_t>(g));
        GroupParams p = compute_group_params(group, spec_.bits, spec_.scale_format,
                                             spec_.zeropoint_format);
        auto codes = quantize(group, p, spec_.bits);
        chunk_codes.insert(chunk_codes.end(), codes.begin(), codes.end());
        params_.push_back(p);
      }
    }
    pack_codes_append(chunk_codes, width_, static_cast<std::size_t>(n_tokens_) * d_, codes_);
    n_tokens_ += n;
  }

  void append_per_channel(std::span<const double> tokens, int n) {
    const int g = spec_.group_size;
    const int G = groups_per_token();
    // One parameter set per channel group, statistics over all n tokens.
    std::vector<double> scratch(static_cast<std::size_t>(n) * g);
    for (int j = 0; j < G; ++j) {
      for (int i = 0; i < n; ++i)
        for (int c = 0; c < g; ++c)
          scratch[static_cast<std::size_t>(i) * g + c] =
              tokens[static_cast<std::size_t>(i) * d_ + static_cast<std::size_t>(j) * g + c];
      params_.push_back(compute_group_params(scratch, spec_.bits, spec_.scale_format,
                                             spec_.zeropoint_format));
    }
    std::vector<std::uint32_t> chunk_codes(static_cast<std::size_t>(n) * d_);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < G; ++j) {
        auto group = tokens.subspan(static_cast<std::size_t>(i) * d_ + static_cast<std::size_t>(j) * g,
                                    static_cast<std::size_t>(g));
        auto codes = quantize(group, params_[static_cast<std::size_t>(j)], spec_.bits);
        std::copy(codes.begin(), codes.end(),
                  chunk_codes.begin() + static_cast<std::size_t>(i) * d_ + static_cast<std::size_t>(j) * g);
      }
    }
    pack_codes_append(chunk_codes, width_, 0, codes_);
    n_tokens_ = n;
  }

  QuantSpec spec_;
  int d_ = 0;
  int width_ = 2;
  int n_tokens_ = 0;
  std::vector<std::uint8_t> codes_;
  std::vector<GroupParams> params_;
};

}  // namespace jensenkv
