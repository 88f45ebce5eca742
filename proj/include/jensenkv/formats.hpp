#pragma once

// Emulation of the narrow storage formats used for quantization metadata.
// Values are rounded onto the target format's grid (round-to-nearest-even)
// but kept as doubles; every grid point is exactly representable in double,
// so emulate(emulate(x)) == emulate(x).

#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace jensenkv {

namespace detail {

// Round x onto a grid with `sig_bits` significand bits (1 implicit + the
// rest stored), minimum normal exponent `min_exp` (value 2^min_exp) and
// saturation at +-max_mag. Ties round to even multiples.
inline double round_to_grid(double x, int sig_bits, int min_exp, double max_mag) {
  if (x == 0.0) return 0.0;
  if (!std::isfinite(x)) throw std::invalid_argument("round_to_grid: non-finite input");
  const double ax = std::fabs(x);
  int exp = 0;
  std::frexp(ax, &exp);  // ax = m * 2^exp, m in [0.5, 1)
  // Spacing within the binade [2^(exp-1), 2^exp); subnormal spacing below
  // the minimum normal binade.
  int q_exp = exp - sig_bits;
  const int min_q_exp = min_exp - (sig_bits - 1);
  if (q_exp < min_q_exp) q_exp = min_q_exp;
  const double quantum = std::ldexp(1.0, q_exp);
  double v = std::nearbyint(x / quantum) * quantum;  // default FP env: ties-to-even
  if (v > max_mag) v = max_mag;
  if (v < -max_mag) v = -max_mag;
  return v;
}

}  // namespace detail

// FP8 E4M3 (finite-only variant): 4 exponent bits, 3 mantissa bits, bias 7.
// Max magnitude 448; values beyond saturate. Smallest positive subnormal 2^-9.
inline double emulate_fp8_e4m3(double x) {
  return detail::round_to_grid(x, /*sig_bits=*/4, /*min_exp=*/-6, /*max_mag=*/448.0);
}

// BF16: 8 exponent bits, 7 mantissa bits, bias 127. Overflow saturates at the
// largest finite value instead of producing infinity.
inline double emulate_bf16(double x) {
  // max finite bf16 = (2 - 2^-7) * 2^127
  const double max_bf16 = std::ldexp(2.0 - 0x1.0p-7, 127);
  return detail::round_to_grid(x, /*sig_bits=*/8, /*min_exp=*/-126, max_bf16);
}

inline double fp8_e4m3_min_positive() { return 0x1.0p-9; }

}  // namespace jensenkv
