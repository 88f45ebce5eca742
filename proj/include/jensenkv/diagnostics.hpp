#pragma once

// Attention-level measurements comparing quantized (corrected or not) runs
// against the full-precision reference: attention mass on the cached block,
// its shift, Jensen-Shannon divergence of weight rows, output MSE, and
// summary statistics.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "jensenkv/matrix.hpp"

namespace jensenkv {

// (P_cached, P_current): attention mass on [0, split) and [split, N).
inline std::pair<double, double> attention_mass(std::span<const double> weights_row,
                                                int split_index) {
  if (split_index < 0 || static_cast<std::size_t>(split_index) > weights_row.size())
    throw std::invalid_argument("attention_mass: split out of range");
  double total = 0.0, cached = 0.0;
  for (std::size_t i = 0; i < weights_row.size(); ++i) {
    total += weights_row[i];
    if (i < static_cast<std::size_t>(split_index)) cached += weights_row[i];
  }
  if (std::fabs(total - 1.0) > 1e-5)
    throw std::invalid_argument("attention_mass: row is not normalized");
  return {cached, 1.0 - cached};
}

// Per-row shift of cached attention mass, test minus reference.
inline std::vector<double> attention_mass_shift(const MatrixD& ref_weights,
                                                const MatrixD& test_weights, int split_index) {
  if (ref_weights.rows != test_weights.rows || ref_weights.cols != test_weights.cols)
    throw std::invalid_argument("attention_mass_shift: shape mismatch");
  std::vector<double> out(static_cast<std::size_t>(ref_weights.rows));
  for (int m = 0; m < ref_weights.rows; ++m) {
    const double p_ref = attention_mass(ref_weights.row(m), split_index).first;
    const double p_test = attention_mass(test_weights.row(m), split_index).first;
    out[static_cast<std::size_t>(m)] = p_test - p_ref;
  }
  return out;
}

// Base-2 Jensen-Shannon divergence between two distributions; in [0, 1],
// symmetric, 0 iff p == q.
inline double jensen_shannon_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size())
    throw std::invalid_argument("jensen_shannon_divergence: length mismatch");
  double jsd = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] < 0.0 || q[i] < 0.0)
      throw std::invalid_argument("jensen_shannon_divergence: negative entry");
    const double m = 0.5 * (p[i] + q[i]);
    if (p[i] > 0.0) jsd += 0.5 * p[i] * std::log2(p[i] / m);
    if (q[i] > 0.0) jsd += 0.5 * q[i] * std::log2(q[i] / m);
  }
  return std::max(0.0, jsd);
}

// Mean over all elements of the squared difference.
inline double attention_output_mse(const MatrixF& ref_output, const MatrixF& test_output) {
  if (ref_output.rows != test_output.rows || ref_output.cols != test_output.cols)
    throw std::invalid_argument("attention_output_mse: shape mismatch");
  if (ref_output.empty()) throw std::invalid_argument("attention_output_mse: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < ref_output.data.size(); ++i) {
    const double diff = static_cast<double>(ref_output.data[i]) -
                        static_cast<double>(test_output.data[i]);
    acc += diff * diff;
  }
  return acc / static_cast<double>(ref_output.data.size());
}

struct Summary {
  double mean = 0.0;
  double median = 0.0;
  double p5 = 0.0;
  double p95 = 0.0;
  double min = 0.0;
  double max = 0.0;
  std::vector<double> hist_edges;   // n_bins + 1 edges, fixed width
  std::vector<std::uint64_t> hist_counts;
};

// Percentile convention: sorted[min(n-1, floor(n * p / 100))]. Median is
// percentile(50) under the same rule.
inline double percentile(std::span<const double> sorted, double p) {
  const std::size_t n = sorted.size();
  std::size_t idx = static_cast<std::size_t>(std::floor(static_cast<double>(n) * p / 100.0));
  if (idx >= n) idx = n - 1;
  return sorted[idx];
}

inline Summary summarize(std::span<const double> values, int n_bins = 32) {
  if (values.empty()) throw std::invalid_argument("summarize: empty input");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  Summary s;
  double acc = 0.0;
  for (double v : sorted) acc += v;
  s.mean = acc / static_cast<double>(sorted.size());
  s.median = percentile(sorted, 50.0);
  s.p5 = percentile(sorted, 5.0);
  s.p95 = percentile(sorted, 95.0);
  s.min = sorted.front();
  s.max = sorted.back();
  const double lo = s.min;
  double width = (s.max - s.min) / n_bins;
  if (width <= 0.0) width = 1.0;  // constant input: single occupied bin
  s.hist_edges.resize(static_cast<std::size_t>(n_bins) + 1);
  for (int i = 0; i <= n_bins; ++i) s.hist_edges[static_cast<std::size_t>(i)] = lo + width * i;
  s.hist_counts.assign(static_cast<std::size_t>(n_bins), 0);
  for (double v : sorted) {
    int bin = static_cast<int>((v - lo) / width);
    bin = std::clamp(bin, 0, n_bins - 1);
    ++s.hist_counts[static_cast<std::size_t>(bin)];
  }
  return s;
}

}  // namespace jensenkv
