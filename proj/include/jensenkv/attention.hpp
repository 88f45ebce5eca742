#pragma once

// Reference softmax attention over a cached/current token split.
//
// Cached keys (and by default values) live in a quantized cache; current
// keys/values are full precision. attend() dequantizes the cached keys,
// forms both score blocks, subtracts the bias correction from cached scores
// only, applies a row-stable softmax over the concatenated row
// (cached-then-current) and weights the values. The correction is produced
// on the fly per (query, cached token) from per-group quantities and never
// materialized as a full matrix.

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "jensenkv/correction.hpp"
#include "jensenkv/matrix.hpp"
#include "jensenkv/parallel.hpp"
#include "jensenkv/quant.hpp"
#include "jensenkv/rotation.hpp"

namespace jensenkv {

// Quantized KV cache for one attention head. Keys are rotated before
// quantization when the spec asks for it; values never are. A passthrough
// cache stores exact tensors with zero step sizes (no noise, no correction).
class KvCache {
 public:
  KvCache(const QuantSpec& spec, int d, int d_v, bool quantize_values = true)
      : spec_(spec),
        d_(d),
        d_v_(d_v),
        quantize_values_(quantize_values),
        keys_(spec, d),
        values_(quantize_values ? std::optional<QuantizedTokenBlock>(QuantizedTokenBlock(spec, d_v))
                                : std::nullopt) {
    spec_.validate();
    if (quantize_values && d_v % spec.group_size != 0)
      throw std::invalid_argument("KvCache: group_size must divide d_v");
    if (spec.rotation && !is_power_of_two(d))
      throw std::invalid_argument("KvCache: rotation requires power-of-two d");
  }

  // Passthrough cache: exact keys/values, all deltas zero.
  static KvCache passthrough(int d, int d_v) {
    QuantSpec spec;
    spec.bits = 16;
    spec.group_size = 1;
    spec.scale_format = ScaleFormat::kFullPrecision;
    spec.zeropoint_format = ZeroPointFormat::kFullPrecision;
    KvCache c(spec, d, d_v, false);
    c.passthrough_ = true;
    return c;
  }

  const QuantSpec& spec() const { return spec_; }
  int dim() const { return d_; }
  int value_dim() const { return d_v_; }
  int n_tokens() const { return n_tokens_; }
  bool rotated() const { return spec_.rotation; }
  std::uint64_t rotation_seed() const { return spec_.seed; }
  bool is_passthrough() const { return passthrough_; }
  bool values_quantized() const { return quantize_values_; }
  const QuantizedTokenBlock& key_block() const { return keys_; }

  // Dequantized keys (rotated space when rotation is on), row-major n x d.
  const MatrixF& keys_hat() const { return keys_hat_; }
  // Dequantized values, row-major n x d_v.
  const MatrixF& values_hat() const { return values_hat_; }
  // Per-token per-group key step sizes, n x G.
  const MatrixD& key_group_deltas() const { return key_group_deltas_; }
  int groups_per_token() const { return keys_.groups_per_token(); }

  // Width of each key channel group (spec.group_size, or d for passthrough).
  int key_group_size() const { return passthrough_ ? d_ : spec_.group_size; }

  std::uint64_t stored_bits() const {
    std::uint64_t bits = keys_.stored_bits();
    if (values_) bits += values_->stored_bits();
    return bits;
  }

  // Reassemble a cache from stored blocks (file loading, explicit tests).
  // `plain_values` carries the values when they are kept full precision.
  static KvCache from_blocks(const QuantSpec& spec, int d, int d_v, QuantizedTokenBlock keys,
                             std::optional<QuantizedTokenBlock> values,
                             std::optional<MatrixF> plain_values) {
    KvCache c(spec, d, d_v, values.has_value());
    if (keys.dim() != d) throw std::invalid_argument("from_blocks: key dim mismatch");
    c.n_tokens_ = keys.n_tokens();
    c.keys_ = std::move(keys);
    if (values.has_value()) {
      if (values->n_tokens() != c.n_tokens_ || values->dim() != d_v)
        throw std::invalid_argument("from_blocks: value block mismatch");
      c.values_ = std::move(values);
    } else {
      if (!plain_values.has_value() || plain_values->rows != c.n_tokens_ ||
          plain_values->cols != d_v)
        throw std::invalid_argument("from_blocks: plain values mismatch");
      c.values_hat_ = std::move(*plain_values);
    }
    c.rebuild_views();
    return c;
  }

 private:
  void rebuild_views() {
    auto deq = keys_.dequantize_all();
    keys_hat_ = MatrixF(n_tokens_, d_);
    for (std::size_t i = 0; i < deq.size(); ++i)
      keys_hat_.data[i] = static_cast<float>(deq[i]);
    const int G = keys_.groups_per_token();
    key_group_deltas_ = MatrixD(n_tokens_, G);
    for (int i = 0; i < n_tokens_; ++i) {
      auto deltas = keys_.token_group_deltas(i);
      for (int j = 0; j < G; ++j) key_group_deltas_.at(i, j) = deltas[j];
    }
    if (values_) {
      auto vdeq = values_->dequantize_all();
      values_hat_ = MatrixF(n_tokens_, d_v_);
      for (std::size_t i = 0; i < vdeq.size(); ++i)
        values_hat_.data[i] = static_cast<float>(vdeq[i]);
    }
  }

  friend void write_chunk_to_cache(KvCache&, const MatrixF&, const MatrixF&);

  QuantSpec spec_;
  int d_ = 0;
  int d_v_ = 0;
  bool quantize_values_ = true;
  bool passthrough_ = false;
  int n_tokens_ = 0;
  QuantizedTokenBlock keys_;
  std::optional<QuantizedTokenBlock> values_;
  MatrixF keys_hat_;
  MatrixF values_hat_;
  MatrixD key_group_deltas_;
};

// Quantize one chunk of keys/values and append it to the cache. Keys are
// rotated first when the cache spec enables rotation (seed = spec.seed).
inline void write_chunk_to_cache(KvCache& cache, const MatrixF& keys, const MatrixF& values) {
  if (keys.cols != cache.d_ || values.cols != cache.d_v_ || keys.rows != values.rows)
    throw std::invalid_argument("write_chunk_to_cache: shape mismatch");
  if (keys.rows == 0) throw std::invalid_argument("write_chunk_to_cache: empty chunk");
  const int n = keys.rows;

  if (cache.passthrough_) {
    auto append_rows = [](MatrixF& dst, const MatrixF& src) {
      if (dst.cols == 0) dst.cols = src.cols;
      dst.data.insert(dst.data.end(), src.data.begin(), src.data.end());
      dst.rows += src.rows;
    };
    append_rows(cache.keys_hat_, keys);
    append_rows(cache.values_hat_, values);
    MatrixD zeros(cache.n_tokens_ + n, 1);
    cache.key_group_deltas_ = std::move(zeros);
    cache.n_tokens_ += n;
    return;
  }

  MatrixD key_rows = to_double(keys);
  if (cache.spec_.rotation) {
    HadamardRotation rot(cache.d_, cache.spec_.seed);
    // Rotation runs in the tensors' working precision so cached scores match
    // what a query rotated in the same precision produces.
    MatrixF rotated = keys;
    rot.rotate_rows_inplace(std::span<float>(rotated.data), n);
    key_rows = to_double(rotated);
  }
  cache.keys_.append(key_rows.data, n);
  if (cache.values_) {
    MatrixD value_rows = to_double(values);
    cache.values_->append(value_rows.data, n);
  } else {
    cache.values_hat_.cols = cache.d_v_;
    cache.values_hat_.data.insert(cache.values_hat_.data.end(), values.data.begin(),
                                  values.data.end());
    cache.values_hat_.rows += n;
  }
  cache.n_tokens_ += n;
  cache.rebuild_views();
}

struct CostCounters {
  // Multiply-add counts.
  std::uint64_t score_ops = 0;       // Q K^T over both blocks
  std::uint64_t correction_ops = 0;  // per-query setup + per-key setup + per-pair terms
};

struct AttentionWorkload {
  MatrixF queries;         // M x d
  const KvCache* cache;    // may have 0 tokens
  MatrixF current_keys;    // R x d, full precision
  MatrixF current_values;  // R x d_v
};

struct AttentionResult {
  MatrixF output;            // M x d_v
  MatrixD weights;           // M x (S+R), row-stochastic; filled when requested
  std::vector<double> row_correction_mean;  // diagnostics: mean b per query row
  CostCounters cost;
};

namespace detail {

inline double dot_scaled(std::span<const float> a, std::span<const float> b, double inv_sqrt_d) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return acc * inv_sqrt_d;
}

// Stable softmax over one score row, in place: subtract the row max, then
// normalize. Fixed left-to-right summation order.
inline void softmax_row_inplace(std::span<double> s) {
  double m = s[0];
  for (double v : s) m = std::max(m, v);
  double z = 0.0;
  for (double& v : s) {
    v = std::exp(v - m);
    z += v;
  }
  for (double& v : s) v /= z;
}

}  // namespace detail

// Plain full-precision softmax attention; ground truth for diagnostics.
inline AttentionResult reference_attention(const MatrixF& queries, const MatrixF& keys,
                                           const MatrixF& values, bool emit_weights = true) {
  if (queries.cols != keys.cols || keys.rows != values.rows)
    throw std::invalid_argument("reference_attention: shape mismatch");
  if (keys.rows == 0) throw std::invalid_argument("reference_attention: need at least one key");
  const int M = queries.rows;
  const int N = keys.rows;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(queries.cols));

  AttentionResult res;
  res.output = MatrixF(M, values.cols);
  if (emit_weights) res.weights = MatrixD(M, N);
  res.cost.score_ops = static_cast<std::uint64_t>(M) * N * queries.cols;

  parallel_chunks(static_cast<std::size_t>(M), 8, [&](std::size_t, std::size_t lo, std::size_t hi) {
    std::vector<double> s(static_cast<std::size_t>(N));
    for (std::size_t m = lo; m < hi; ++m) {
      auto q = queries.row(static_cast<int>(m));
      for (int i = 0; i < N; ++i) s[i] = detail::dot_scaled(q, keys.row(i), inv_sqrt_d);
      detail::softmax_row_inplace(s);
      auto out = res.output.row(static_cast<int>(m));
      for (int c = 0; c < values.cols; ++c) {
        double acc = 0.0;
        for (int i = 0; i < N; ++i) acc += s[i] * static_cast<double>(values.at(i, c));
        out[c] = static_cast<float>(acc);
      }
      if (emit_weights)
        for (int i = 0; i < N; ++i) res.weights.at(static_cast<int>(m), i) = s[i];
    }
  });
  return res;
}

// Attention over the cached/current split with the chosen correction mode.
inline AttentionResult attend(const AttentionWorkload& w, CorrectionMode mode,
                              bool emit_weights = true) {
  if (w.cache == nullptr) throw std::invalid_argument("attend: missing cache");
  const KvCache& cache = *w.cache;
  const int d = w.queries.cols;
  const int M = w.queries.rows;
  const int S = cache.n_tokens();
  const int R = w.current_keys.rows;
  const int N = S + R;
  if (w.current_keys.cols != d) throw std::invalid_argument("attend: head dimension mismatch");
  if (R < 1) throw std::invalid_argument("attend: need at least one current token");
  if (w.current_values.rows != R)
    throw std::invalid_argument("attend: current key/value count mismatch");
  const int d_v = w.current_values.cols;
  if (S > 0 && cache.value_dim() != d_v)
    throw std::invalid_argument("attend: value dimension mismatch");
  if (S > 0 && cache.dim() != d) throw std::invalid_argument("attend: cache dimension mismatch");
  if (mode == CorrectionMode::kPerChannelTaylor && S > 0 && !cache.is_passthrough() &&
      cache.spec().granularity != Granularity::kPerChannel)
    throw std::invalid_argument("attend: per-channel correction requires a per-channel cache");

  // Rotated caches need the query (and current keys) in the same rotated
  // space; the recorded seed reconstructs the exact rotation.
  MatrixF queries = w.queries;
  MatrixF current_keys = w.current_keys;
  const bool rotated = S > 0 && cache.rotated();
  if (rotated) {
    HadamardRotation rot(d, cache.rotation_seed());
    rot.rotate_rows_inplace(std::span<float>(queries.data), M);
    rot.rotate_rows_inplace(std::span<float>(current_keys.data), R);
  }

  const MatrixF& cached_keys = cache.keys_hat();
  const MatrixF& cached_values = cache.values_hat();
  const MatrixD& key_deltas = cache.key_group_deltas();
  const int G = S > 0 ? key_deltas.cols : 0;
  const int g = S > 0 ? cache.key_group_size() : 0;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  const bool per_channel_cache =
      S > 0 && !cache.is_passthrough() && cache.spec().granularity == Granularity::kPerChannel;

  AttentionResult res;
  res.output = MatrixF(M, d_v);
  if (emit_weights) res.weights = MatrixD(M, N);
  res.row_correction_mean.assign(static_cast<std::size_t>(M), 0.0);
  res.cost.score_ops = static_cast<std::uint64_t>(M) * N * d;

  // Per-key setup for the grouped fast path: squared step sizes.
  MatrixD delta_sq;
  if (S > 0 && (mode == CorrectionMode::kTaylor)) {
    delta_sq = MatrixD(key_deltas.rows, G);
    for (std::size_t i = 0; i < key_deltas.data.size(); ++i)
      delta_sq.data[i] = key_deltas.data[i] * key_deltas.data[i];
    res.cost.correction_ops += static_cast<std::uint64_t>(key_deltas.rows) * G;
  }

  // Expanded per-channel deltas, needed by the exact and per-channel paths.
  std::vector<float> expanded_deltas;
  if (S > 0 && (mode == CorrectionMode::kExact || mode == CorrectionMode::kPerChannelTaylor)) {
    expanded_deltas.resize(static_cast<std::size_t>(per_channel_cache ? 1 : S) *
                           static_cast<std::size_t>(d));
    const int rows_to_expand = per_channel_cache ? 1 : S;
    for (int i = 0; i < rows_to_expand; ++i)
      for (int j = 0; j < G; ++j)
        for (int c = 0; c < g; ++c)
          expanded_deltas[static_cast<std::size_t>(i) * d + static_cast<std::size_t>(j) * g + c] =
              static_cast<float>(key_deltas.at(i, j));
  }

  std::uint64_t corr_ops_per_row = 0;
  switch (mode) {
    case CorrectionMode::kNone:
      break;
    case CorrectionMode::kTaylor:
      corr_ops_per_row = static_cast<std::uint64_t>(d)            // group norms
                         + static_cast<std::uint64_t>(S) * G;     // per-pair inner products
      break;
    case CorrectionMode::kExact:
      corr_ops_per_row = static_cast<std::uint64_t>(S) * d;
      break;
    case CorrectionMode::kPerChannelTaylor:
      corr_ops_per_row = static_cast<std::uint64_t>(d);
      break;
  }
  res.cost.correction_ops += static_cast<std::uint64_t>(M) * corr_ops_per_row;

  parallel_chunks(static_cast<std::size_t>(M), 8, [&](std::size_t, std::size_t lo, std::size_t hi) {
    std::vector<double> s(static_cast<std::size_t>(N));
    std::vector<double> group_norms(static_cast<std::size_t>(G));
    for (std::size_t m = lo; m < hi; ++m) {
      auto q = queries.row(static_cast<int>(m));

      for (int i = 0; i < S; ++i) s[i] = detail::dot_scaled(q, cached_keys.row(i), inv_sqrt_d);
      for (int i = 0; i < R; ++i)
        s[S + i] = detail::dot_scaled(q, current_keys.row(i), inv_sqrt_d);

      // Correction applies to cached scores only.
      double b_sum = 0.0;
      if (S > 0 && mode != CorrectionMode::kNone) {
        switch (mode) {
          case CorrectionMode::kTaylor: {
            for (int j = 0; j < G; ++j) {
              double acc = 0.0;
              for (int c = 0; c < g; ++c) {
                const double v = q[static_cast<std::size_t>(j) * g + c];
                acc += v * v;
              }
              group_norms[j] = acc;
            }
            const double inv24d = 1.0 / (24.0 * d);
            for (int i = 0; i < S; ++i) {
              double b = 0.0;
              for (int j = 0; j < G; ++j) b += delta_sq.at(i, j) * group_norms[j];
              b *= inv24d;
              s[i] -= b;
              b_sum += b;
            }
            break;
          }
          case CorrectionMode::kExact: {
            if (cache.is_passthrough()) {
              // zero step sizes, zero correction
            } else if (per_channel_cache) {
              std::span<const float> deltas(expanded_deltas.data(), static_cast<std::size_t>(d));
              const double b = exact_correction<float>(q, deltas);
              for (int i = 0; i < S; ++i) {
                s[i] -= b;
                b_sum += b;
              }
            } else {
              for (int i = 0; i < S; ++i) {
                std::span<const float> deltas(expanded_deltas.data() + static_cast<std::size_t>(i) * d,
                                              static_cast<std::size_t>(d));
                const double b = exact_correction<float>(q, deltas);
                s[i] -= b;
                b_sum += b;
              }
            }
            break;
          }
          case CorrectionMode::kPerChannelTaylor: {
            double b = 0.0;
            if (!cache.is_passthrough()) {
              std::span<const float> deltas(expanded_deltas.data(), static_cast<std::size_t>(d));
              b = taylor_correction<float>(q, deltas);
            }
            for (int i = 0; i < S; ++i) {
              s[i] -= b;
              b_sum += b;
            }
            break;
          }
          case CorrectionMode::kNone:
            break;
        }
      }
      res.row_correction_mean[m] = S > 0 ? b_sum / S : 0.0;

      detail::softmax_row_inplace(s);

      auto out = res.output.row(static_cast<int>(m));
      for (int c = 0; c < d_v; ++c) {
        double acc = 0.0;
        for (int i = 0; i < S; ++i) acc += s[i] * static_cast<double>(cached_values.at(i, c));
        for (int i = 0; i < R; ++i) acc += s[S + i] * static_cast<double>(w.current_values.at(i, c));
        out[c] = static_cast<float>(acc);
      }
      if (emit_weights)
        for (int i = 0; i < N; ++i) res.weights.at(static_cast<int>(m), i) = s[i];
    }
  });

  return res;
}

}  // namespace jensenkv
