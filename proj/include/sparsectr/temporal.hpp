#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "sparsectr/common.hpp"
#include "sparsectr/tensor.hpp"

namespace sparsectr {

// ---------------------------------------------------------------------------
// Composite relative temporal bias.
//
// Attention logits receive an additive, head-specific bias built from three
// ingredients of the time difference between a query and a key:
//
//   interval:  minus the log2 bucket of the gap in seconds, so attention
//              decays with recency on an exponential scale;
//   hour:      minus sin(pi * hour_gap / 24) where hour_gap is the gap in
//              hours folded into [0, 24), so events at the same time of day
//              (gap near 0 or 24h) are favored over opposite-phase ones;
//   week:      minus one when exactly one of the two events falls on a
//              weekend, capturing weekday/weekend regime switches.
//
// Each ingredient is scaled by a learned non-shared per-head slope. Slopes
// start geometric across heads so different heads begin at different decay
// strengths. Biases are always <= 0 at a positive-slope initialization:
// stronger mismatch can only suppress, never amplify.
// ---------------------------------------------------------------------------

// Log2 bucket of a nonnegative gap in seconds; gaps of 0 or 1 share bucket 0.
inline std::uint64_t time_bucket(std::uint64_t delta_seconds) {
  if (delta_seconds <= 1) return 0;
  return static_cast<std::uint64_t>(std::bit_width(delta_seconds)) - 1;
}

// Same bucket for real-valued gaps (chunk aggregates carry mean times).
inline double time_bucket_real(double delta_seconds) {
  if (delta_seconds <= 1.0) return 0.0;
  return std::floor(std::log2(delta_seconds));
}

// Gap expressed as hours folded into [0, 24).
inline double hour_of_delta(double delta_seconds) {
  return std::fmod(delta_seconds / 3600.0, 24.0);
}

// Saturday/Sunday test for a Unix timestamp. Day 0 (1970-01-01) was a
// Thursday, so with Monday as 0 the weekday index is (day + 3) mod 7 and
// the weekend is {5, 6}.
inline bool is_weekend(std::uint64_t unix_seconds) {
  const std::uint64_t day = unix_seconds / 86400;
  return (day + 3) % 7 >= 5;
}

inline bool is_weekend_real(double unix_seconds) {
  return is_weekend(static_cast<std::uint64_t>(std::floor(unix_seconds)));
}

// --------------------------------------------------------------------------
// Slope-free coefficients. A head's bias entry is the dot product of its
// three slopes with these three coefficients, so bias matrices can be built
// once as constants and combined with slope parameters differentiably.
// --------------------------------------------------------------------------

inline double interval_coeff(double delta_seconds) { return -time_bucket_real(delta_seconds); }

inline double hour_coeff(double delta_seconds) {
  // sin is symmetric about the 12-hour peak; folding onto [0, 12] makes that
  // symmetry exact in floating point (h and 24-h share one computation).
  const double h = hour_of_delta(delta_seconds);
  const double folded = std::min(h, 24.0 - h);
  return -std::sin(std::numbers::pi * folded / 24.0);
}

inline double week_coeff(bool query_weekend, bool key_weekend) {
  return query_weekend == key_weekend ? 0.0 : -1.0;
}

// Scalar composite bias, the ground form used when scoring a single
// query/key pair (and by the dense reference path).
inline double temporal_bias(double delta_seconds, bool query_weekend, bool key_weekend,
                            double slope_interval, double slope_hour, double slope_week) {
  return slope_interval * interval_coeff(delta_seconds) +
         slope_hour * hour_coeff(delta_seconds) +
         slope_week * week_coeff(query_weekend, key_weekend);
}

// Geometric slope initialization: head h (0-based) starts at 2^(-8 h / H).
inline std::vector<double> default_slopes(std::size_t heads) {
  std::vector<double> s(heads);
  const double ratio = std::pow(2.0, -8.0 / static_cast<double>(heads));
  double cur = 1.0;
  for (std::size_t h = 0; h < heads; ++h) {
    s[h] = cur;
    cur *= ratio;
  }
  return s;
}

// Learned slope parameters, one trio of 1 x H rows.
struct TemporalSlopes {
  Tensor interval;
  Tensor hour;
  Tensor week;
};

inline TemporalSlopes make_temporal_slopes(std::size_t heads) {
  auto init = default_slopes(heads);
  return TemporalSlopes{Tensor::param(1, heads, init), Tensor::param(1, heads, init),
                        Tensor::param(1, heads, init)};
}

// Constant coefficient matrices for one query/key geometry. Entries for
// masked or absent slots must be left at zero by the builder.
struct BiasCoefficients {
  Tensor interval;  // n x m, -bucket(delta)
  Tensor hour;      // n x m, -sin(pi h / 24)
  Tensor week;      // n x m, -[weekend mismatch]
};

// Head h's bias matrix: slope_1[h] * C1 + slope_2[h] * C2 + slope_3[h] * C3.
// Differentiable with respect to the slopes; the coefficients are constants.
inline Tensor head_bias(const TemporalSlopes& slopes, std::size_t h,
                        const BiasCoefficients& coeff) {
  Tensor b = scalar_mul(slice_cols(slopes.interval, h, 1), coeff.interval);
  b = add(b, scalar_mul(slice_cols(slopes.hour, h, 1), coeff.hour));
  b = add(b, scalar_mul(slice_cols(slopes.week, h, 1), coeff.week));
  return b;
}

}  // namespace sparsectr
