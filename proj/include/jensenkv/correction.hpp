#pragma once

// Correction of the systematic bias that integer key-cache quantization
// induces in exponentiated attention scores. For zero-mean uniform score
// noise with per-channel half-widths q_c*delta_c/(2*sqrt(d)), the expected
// exponentiated score is inflated by a factor prod_c sinh(a_c)/a_c >= 1;
// subtracting b = log of that factor from the score removes the inflation in
// expectation. The second-order form b = (1/(24d)) sum q_c^2 delta_c^2 is
// exactly half the score-space noise variance.

#include <cmath>
#include <concepts>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace jensenkv {

enum class CorrectionMode { kNone, kExact, kTaylor, kPerChannelTaylor };

inline std::string to_string(CorrectionMode m) {
  switch (m) {
    case CorrectionMode::kNone: return "none";
    case CorrectionMode::kExact: return "exact";
    case CorrectionMode::kTaylor: return "taylor";
    case CorrectionMode::kPerChannelTaylor: return "per-channel";
  }
  return "none";
}

inline CorrectionMode correction_mode_from_string(const std::string& s) {
  if (s == "none") return CorrectionMode::kNone;
  if (s == "exact") return CorrectionMode::kExact;
  if (s == "taylor") return CorrectionMode::kTaylor;
  if (s == "per-channel" || s == "per-channel-taylor") return CorrectionMode::kPerChannelTaylor;
  throw std::invalid_argument("unknown correction mode: " + s);
}

// log(sinh(a)/a), evaluated stably: an even series below the switch point,
// and a + log1p(-exp(-2a)) - log(2a) above it (naive sinh overflows near
// a ~ 710). Even in a; 0 at a = 0.
inline double log_sinh_ratio(double alpha) {
  const double a = std::fabs(alpha);
  if (a < 1e-3) {
    const double a2 = a * a;
    return a2 / 6.0 - a2 * a2 / 180.0;
  }
  return a + std::log1p(-std::exp(-2.0 * a)) - std::log(2.0 * a);
}

// a^2/6, the second-order expansion of log_sinh_ratio.
inline double taylor_term(double alpha) { return alpha * alpha / 6.0; }

namespace detail {

template <std::floating_point T>
inline void check_correction_inputs(std::span<const T> q, std::span<const T> deltas) {
  if (q.size() != deltas.size())
    throw std::invalid_argument("correction: q and deltas length mismatch");
  if (q.empty()) throw std::invalid_argument("correction: empty input");
  for (std::size_t c = 0; c < q.size(); ++c) {
    if (!std::isfinite(static_cast<double>(q[c])) || !std::isfinite(static_cast<double>(deltas[c])))
      throw std::invalid_argument("correction: non-finite input");
    if (deltas[c] < T(0)) throw std::invalid_argument("correction: negative delta");
  }
}

}  // namespace detail

// b = sum_c log(sinh(a_c)/a_c), a_c = q_c*delta_c/(2*sqrt(d)). Nonnegative,
// even in q, zero when all deltas are zero.
template <std::floating_point T>
inline double exact_correction(std::span<const T> q, std::span<const T> deltas) {
  detail::check_correction_inputs(q, deltas);
  const double d = static_cast<double>(q.size());
  const double inv = 1.0 / (2.0 * std::sqrt(d));
  double b = 0.0;
  for (std::size_t c = 0; c < q.size(); ++c)
    b += log_sinh_ratio(static_cast<double>(q[c]) * static_cast<double>(deltas[c]) * inv);
  return b;
}

// b = (1/(24d)) sum_c q_c^2 delta_c^2
template <std::floating_point T>
inline double taylor_correction(std::span<const T> q, std::span<const T> deltas) {
  detail::check_correction_inputs(q, deltas);
  const double d = static_cast<double>(q.size());
  double s = 0.0;
  for (std::size_t c = 0; c < q.size(); ++c) {
    const double t = static_cast<double>(q[c]) * static_cast<double>(deltas[c]);
    s += t * t;
  }
  return s / (24.0 * d);
}

// Grouped form: b = (1/(24d)) sum_j delta_j^2 * ||q_j||^2 with per-group
// squared query norms. Identical to taylor_correction when the per-channel
// deltas are constant within each group.
inline double grouped_taylor_correction(std::span<const double> q_group_sq_norms,
                                        std::span<const double> group_deltas, int d) {
  if (q_group_sq_norms.size() != group_deltas.size())
    throw std::invalid_argument("grouped_taylor_correction: group count mismatch");
  if (d < 1) throw std::invalid_argument("grouped_taylor_correction: d must be >= 1");
  double s = 0.0;
  for (std::size_t j = 0; j < group_deltas.size(); ++j)
    s += group_deltas[j] * group_deltas[j] * q_group_sq_norms[j];
  return s / (24.0 * static_cast<double>(d));
}

// Variance of the score noise delta = q^T eps / sqrt(d) with independent
// per-channel uniform noise of width delta_c: (1/(12d)) sum q_c^2 delta_c^2.
template <std::floating_point T>
inline double score_noise_variance(std::span<const T> q, std::span<const T> deltas) {
  detail::check_correction_inputs(q, deltas);
  const double d = static_cast<double>(q.size());
  double s = 0.0;
  for (std::size_t c = 0; c < q.size(); ++c) {
    const double t = static_cast<double>(q[c]) * static_cast<double>(deltas[c]);
    s += t * t;
  }
  return s / (12.0 * d);
}

// Step sizes shared by all cached tokens collapse the correction to one
// scalar per query; the caller subtracts it from every cached score.
template <std::floating_point T>
inline double per_channel_correction(std::span<const T> q, std::span<const T> channel_deltas,
                                     CorrectionMode mode) {
  switch (mode) {
    case CorrectionMode::kExact:
      return exact_correction(q, channel_deltas);
    case CorrectionMode::kTaylor:
    case CorrectionMode::kPerChannelTaylor:
      return taylor_correction(q, channel_deltas);
    case CorrectionMode::kNone:
      return 0.0;
  }
  return 0.0;
}

// (exact, second-order) pairs for a list of alpha values.
inline std::vector<std::pair<double, double>> exact_vs_taylor_curve(std::span<const double> alphas) {
  std::vector<std::pair<double, double>> out;
  out.reserve(alphas.size());
  for (double a : alphas) out.emplace_back(log_sinh_ratio(a), taylor_term(a));
  return out;
}

}  // namespace jensenkv
