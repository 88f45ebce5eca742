#pragma once

// Monte Carlo ground truth for the quantization noise model and the bias
// correction. Noise is sampled from the model itself (independent uniform
// per-channel errors on [-delta/2, +delta/2]); an empirical mode draws
// residuals from real quantize/dequantize round-trips instead, making the
// uniformity assumption testable.
//
// Sampling is split into fixed-size chunks with sub-stream seeds derived
// from the master seed (see rng.hpp), and chunk results are reduced in chunk
// order, so every estimate is reproducible for any thread count.

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "jensenkv/attention.hpp"
#include "jensenkv/correction.hpp"
#include "jensenkv/matrix.hpp"
#include "jensenkv/parallel.hpp"
#include "jensenkv/quant.hpp"
#include "jensenkv/rng.hpp"

namespace jensenkv {

struct NoiseModel {
  std::vector<double> deltas;  // per-channel step sizes, >= 0

  void validate() const {
    if (deltas.empty()) throw std::invalid_argument("NoiseModel: empty deltas");
    for (double d : deltas)
      if (!(d >= 0.0) || !std::isfinite(d))
        throw std::invalid_argument("NoiseModel: deltas must be finite and >= 0");
  }
};

struct McEstimate {
  double mean = 0.0;
  double std_error = 0.0;  // sample std / sqrt(n)
  std::uint64_t n_samples = 0;
  std::uint64_t seed = 0;
};

namespace detail {

inline constexpr std::size_t kMcChunk = 1 << 14;

// One score-noise draw: delta_score = q^T eps / sqrt(d).
inline double draw_score_noise(std::span<const double> q, std::span<const double> deltas,
                               double inv_sqrt_d, Rng& rng) {
  double acc = 0.0;
  for (std::size_t c = 0; c < q.size(); ++c)
    acc += q[c] * rng.uniform_symmetric(deltas[c] * 0.5);
  return acc * inv_sqrt_d;
}

}  // namespace detail

// n draws of the score noise for one (query, noise model) pair.
inline std::vector<double> sample_score_noise(std::span<const double> q, const NoiseModel& model,
                                              std::uint64_t n, std::uint64_t seed) {
  model.validate();
  if (q.size() != model.deltas.size())
    throw std::invalid_argument("sample_score_noise: q/deltas length mismatch");
  if (n < 1) throw std::invalid_argument("sample_score_noise: n must be >= 1");
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(q.size()));
  std::vector<double> out(n);
  parallel_chunks(n, detail::kMcChunk, [&](std::size_t chunk, std::size_t lo, std::size_t hi) {
    Rng rng(derive_seed(seed, chunk));
    for (std::size_t i = lo; i < hi; ++i)
      out[i] = detail::draw_score_noise(q, model.deltas, inv_sqrt_d, rng);
  });
  return out;
}

// MC estimate of E[exp(score noise)]; converges to prod_c sinh(a_c)/a_c.
inline McEstimate mc_expected_exp(std::span<const double> q, const NoiseModel& model,
                                  std::uint64_t n, std::uint64_t seed) {
  model.validate();
  if (q.size() != model.deltas.size())
    throw std::invalid_argument("mc_expected_exp: q/deltas length mismatch");
  if (n < 1) throw std::invalid_argument("mc_expected_exp: n must be >= 1");
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(q.size()));
  const std::size_t n_chunks = (n + detail::kMcChunk - 1) / detail::kMcChunk;
  std::vector<double> sums(n_chunks, 0.0), sq_sums(n_chunks, 0.0);
  parallel_chunks(n, detail::kMcChunk, [&](std::size_t chunk, std::size_t lo, std::size_t hi) {
    Rng rng(derive_seed(seed, chunk));
    double s = 0.0, s2 = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
      const double v = std::exp(detail::draw_score_noise(q, model.deltas, inv_sqrt_d, rng));
      s += v;
      s2 += v * v;
    }
    sums[chunk] = s;
    sq_sums[chunk] = s2;
  });
  double s = 0.0, s2 = 0.0;
  for (std::size_t c = 0; c < n_chunks; ++c) {
    s += sums[c];
    s2 += sq_sums[c];
  }
  McEstimate est;
  est.n_samples = n;
  est.seed = seed;
  est.mean = s / static_cast<double>(n);
  const double var = std::max(0.0, s2 / static_cast<double>(n) - est.mean * est.mean);
  est.std_error = std::sqrt(var / static_cast<double>(n));
  return est;
}

struct PartitionBiasEstimate {
  double uncorrected_ratio = 0.0;  // mean of (noisy cached partition sum) / (true one)
  double corrected_ratio = 0.0;    // same after per-score correction
  double uncorrected_se = 0.0;
  double corrected_se = 0.0;
  std::uint64_t n_draws = 0;
};

// Samples model noise on every (cached token, channel), recomputing the
// cached partition sum per draw, for every query row. True scores come from
// the full-precision keys; step sizes and corrections from quantizing those
// keys under `spec`. Ratios are averaged over draws and query rows.
inline PartitionBiasEstimate mc_partition_bias(const MatrixF& queries, const MatrixF& cached_keys,
                                               const QuantSpec& spec, CorrectionMode mode,
                                               std::uint64_t n_draws, std::uint64_t seed) {
  if (queries.cols != cached_keys.cols)
    throw std::invalid_argument("mc_partition_bias: dimension mismatch");
  if (cached_keys.rows < 1) throw std::invalid_argument("mc_partition_bias: empty cache");
  if (n_draws < 1) throw std::invalid_argument("mc_partition_bias: n_draws must be >= 1");
  const int M = queries.rows;
  const int S = cached_keys.rows;
  const int d = queries.cols;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));

  // Step sizes per (token, channel) from an actual quantization pass.
  KvCache cache(spec, d, d, true);
  write_chunk_to_cache(cache, cached_keys, cached_keys);
  const MatrixD& group_deltas = cache.key_group_deltas();
  const int g = cache.key_group_size();
  MatrixD deltas(S, d);
  for (int i = 0; i < S; ++i)
    for (int c = 0; c < d; ++c) deltas.at(i, c) = group_deltas.at(i, c / g);

  // Queries and keys in the space the noise lives in (rotated if enabled).
  MatrixF q_used = queries;
  MatrixF k_used = cached_keys;
  if (spec.rotation) {
    HadamardRotation rot(d, spec.seed);
    rot.rotate_rows_inplace(std::span<float>(q_used.data), M);
    rot.rotate_rows_inplace(std::span<float>(k_used.data), S);
  }

  // True scores and per-(query, token) corrections.
  MatrixD scores(M, S);
  MatrixD corrections(M, S);
  for (int m = 0; m < M; ++m) {
    auto q = q_used.row(m);
    std::vector<double> qd(q.begin(), q.end());
    for (int i = 0; i < S; ++i) {
      double acc = 0.0;
      for (int c = 0; c < d; ++c)
        acc += static_cast<double>(q[c]) * static_cast<double>(k_used.at(i, c));
      scores.at(m, i) = acc * inv_sqrt_d;
      double b = 0.0;
      if (mode != CorrectionMode::kNone) {
        std::vector<double> dd(deltas.row(i).begin(), deltas.row(i).end());
        b = (mode == CorrectionMode::kExact)
                ? exact_correction<double>(qd, dd)
                : taylor_correction<double>(qd, dd);
      }
      corrections.at(m, i) = b;
    }
  }

  std::vector<double> z_true(M, 0.0);
  for (int m = 0; m < M; ++m) {
    double z = 0.0;
    for (int i = 0; i < S; ++i) z += std::exp(scores.at(m, i));
    z_true[static_cast<std::size_t>(m)] = z;
  }

  const std::size_t n_chunks = (n_draws + detail::kMcChunk - 1) / detail::kMcChunk;
  std::vector<double> sum_u(n_chunks, 0.0), sum_u2(n_chunks, 0.0);
  std::vector<double> sum_c(n_chunks, 0.0), sum_c2(n_chunks, 0.0);
  parallel_chunks(n_draws, detail::kMcChunk, [&](std::size_t chunk, std::size_t lo, std::size_t hi) {
    Rng rng(derive_seed(seed, chunk));
    std::vector<double> noise(static_cast<std::size_t>(S) * d);
    double su = 0.0, su2 = 0.0, sc = 0.0, sc2 = 0.0;
    for (std::size_t t = lo; t < hi; ++t) {
      for (std::size_t i = 0; i < noise.size(); ++i)
        noise[i] = rng.uniform_symmetric(deltas.data[i] * 0.5);
      double ratio_u = 0.0, ratio_c = 0.0;
      for (int m = 0; m < M; ++m) {
        auto q = q_used.row(m);
        double z_hat = 0.0, z_tilde = 0.0;
        for (int i = 0; i < S; ++i) {
          double dn = 0.0;
          for (int c = 0; c < d; ++c)
            dn += static_cast<double>(q[c]) * noise[static_cast<std::size_t>(i) * d + c];
          dn *= inv_sqrt_d;
          const double noisy = std::exp(scores.at(m, i) + dn);
          z_hat += noisy;
          z_tilde += std::exp(scores.at(m, i) + dn - corrections.at(m, i));
        }
        ratio_u += z_hat / z_true[static_cast<std::size_t>(m)];
        ratio_c += z_tilde / z_true[static_cast<std::size_t>(m)];
      }
      ratio_u /= M;
      ratio_c /= M;
      su += ratio_u;
      su2 += ratio_u * ratio_u;
      sc += ratio_c;
      sc2 += ratio_c * ratio_c;
    }
    sum_u[chunk] = su;
    sum_u2[chunk] = su2;
    sum_c[chunk] = sc;
    sum_c2[chunk] = sc2;
  });

  double su = 0.0, su2 = 0.0, sc = 0.0, sc2 = 0.0;
  for (std::size_t c = 0; c < n_chunks; ++c) {
    su += sum_u[c];
    su2 += sum_u2[c];
    sc += sum_c[c];
    sc2 += sum_c2[c];
  }
  PartitionBiasEstimate est;
  est.n_draws = n_draws;
  const double n = static_cast<double>(n_draws);
  est.uncorrected_ratio = su / n;
  est.corrected_ratio = sc / n;
  est.uncorrected_se =
      std::sqrt(std::max(0.0, su2 / n - est.uncorrected_ratio * est.uncorrected_ratio) / n);
  est.corrected_se =
      std::sqrt(std::max(0.0, sc2 / n - est.corrected_ratio * est.corrected_ratio) / n);
  return est;
}

struct SkewDemo {
  double reference = 0.0;         // exp(s)
  double mean_uncorrected = 0.0;  // E[exp(s + noise)]
  double mean_corrected = 0.0;    // E[exp(s + noise - b)], b the exact correction
  double median_uncorrected = 0.0;
  double correction = 0.0;
  std::vector<double> hist_edges;
  std::vector<std::uint64_t> hist_uncorrected;
  std::vector<std::uint64_t> hist_corrected;
};

// Single-score demonstration of the exponentiation skew: noise with step
// size delta on a scalar score s (d = 1, unit query).
inline SkewDemo skew_demo(double s, double delta, std::uint64_t n, std::uint64_t seed,
                          int n_bins = 64) {
  if (n < 1) throw std::invalid_argument("skew_demo: n must be >= 1");
  if (delta < 0.0) throw std::invalid_argument("skew_demo: delta must be >= 0");
  const std::vector<double> q{1.0};
  const std::vector<double> dd{delta};
  SkewDemo demo;
  demo.reference = std::exp(s);
  demo.correction = exact_correction<double>(q, dd);

  std::vector<double> uncorrected(n);
  Rng rng(seed);
  for (std::uint64_t i = 0; i < n; ++i)
    uncorrected[i] = std::exp(s + rng.uniform_symmetric(delta * 0.5));
  std::vector<double> sorted(uncorrected);
  std::sort(sorted.begin(), sorted.end());
  demo.median_uncorrected = sorted[sorted.size() / 2];

  double acc = 0.0;
  for (double v : uncorrected) acc += v;
  demo.mean_uncorrected = acc / static_cast<double>(n);
  const double scale = std::exp(-demo.correction);
  demo.mean_corrected = demo.mean_uncorrected * scale;

  const double lo = sorted.front() * std::min(1.0, scale);
  const double hi = std::max(sorted.back(), demo.reference);
  double width = (hi - lo) / n_bins;
  if (width <= 0.0) width = 1.0;
  demo.hist_edges.resize(static_cast<std::size_t>(n_bins) + 1);
  for (int i = 0; i <= n_bins; ++i) demo.hist_edges[static_cast<std::size_t>(i)] = lo + width * i;
  demo.hist_uncorrected.assign(static_cast<std::size_t>(n_bins), 0);
  demo.hist_corrected.assign(static_cast<std::size_t>(n_bins), 0);
  for (double v : uncorrected) {
    const auto clamp_bin = [&](double x) {
      int bin = static_cast<int>((x - lo) / width);
      return static_cast<std::size_t>(std::clamp(bin, 0, n_bins - 1));
    };
    ++demo.hist_uncorrected[clamp_bin(v)];
    ++demo.hist_corrected[clamp_bin(v * scale)];
  }
  return demo;
}

struct ResidualMoments {
  double mean = 0.0;      // of residual / delta, target 0
  double variance = 0.0;  // of residual / delta, target 1/12
  double max_abs = 0.0;   // target <= 1/2
  std::uint64_t n = 0;
};

// Empirical residual mode: quantize/dequantize round-trips on random normal
// groups, residuals normalized by the stored step size. Exercises the
// uniform-noise assumption on real rounding errors.
inline ResidualMoments empirical_residual_moments(int bits, int group_size, std::uint64_t n_groups,
                                                  std::uint64_t seed) {
  if (n_groups < 1) throw std::invalid_argument("empirical_residual_moments: need groups");
  Rng rng(seed);
  double s = 0.0, s2 = 0.0, max_abs = 0.0;
  std::uint64_t n = 0;
  std::vector<double> x(static_cast<std::size_t>(group_size));
  for (std::uint64_t gi = 0; gi < n_groups; ++gi) {
    for (auto& v : x) v = rng.normal();
    const GroupParams p = compute_group_params(x, bits);
    const auto codes = quantize(x, p, bits);
    const auto x_hat = dequantize(codes, p);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double r = (x_hat[i] - x[i]) / p.delta;
      s += r;
      s2 += r * r;
      max_abs = std::max(max_abs, std::fabs(r));
      ++n;
    }
  }
  ResidualMoments m;
  m.n = n;
  m.mean = s / static_cast<double>(n);
  m.variance = std::max(0.0, s2 / static_cast<double>(n) - m.mean * m.mean);
  m.max_abs = max_abs;
  return m;
}

}  // namespace jensenkv
