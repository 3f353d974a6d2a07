#pragma once

#include <cfenv>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "kws/errors.hpp"

namespace kws {

// int16 quantization with symmetric, per-tensor, power-of-two scales:
// real value ~= stored * 2^exponent. Keeping scales to powers of two makes
// every inter-layer rescale a plain arithmetic shift.

struct QParams {
  int exponent = -15;
};

inline constexpr int16_t kInt16Max = 32767;
inline constexpr int16_t kInt16Min = -32768;

/// Smallest exponent e with max|x| / 2^e <= 32767. All-zero tensors get
/// e = -15 by convention.
inline QParams calibrate(std::span<const float> values) {
  float max_abs = 0.0f;
  for (float v : values) {
    if (!std::isfinite(v)) {
      throw shape_error("calibrate: non-finite value in tensor");
    }
    max_abs = std::max(max_abs, std::fabs(v));
  }
  if (max_abs == 0.0f) return QParams{-15};
  int e = -128;
  while (std::ldexp(double(max_abs), -e) > double(kInt16Max)) ++e;
  return QParams{e};
}

inline int16_t saturate_i16(int64_t v) {
  if (v > kInt16Max) return kInt16Max;
  if (v < kInt16Min) return kInt16Min;
  return int16_t(v);
}

/// Round-to-nearest-even of x / 2^e, saturated to int16.
inline int16_t quantize_value(float x, const QParams& q) {
  const double scaled = std::ldexp(double(x), -q.exponent);
  return saturate_i16(int64_t(std::nearbyint(scaled)));
}

inline std::vector<int16_t> quantize(std::span<const float> values,
                                     const QParams& q) {
  std::vector<int16_t> out(values.size());
  for (size_t i = 0; i < values.size(); ++i) {
    out[i] = quantize_value(values[i], q);
  }
  return out;
}

inline float dequantize_value(int16_t v, const QParams& q) {
  return float(std::ldexp(double(v), q.exponent));
}

inline std::vector<float> dequantize(std::span<const int16_t> values,
                                     const QParams& q) {
  std::vector<float> out(values.size());
  for (size_t i = 0; i < values.size(); ++i) {
    out[i] = dequantize_value(values[i], q);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Packed dual-MAC

/// Two int16 lanes in one 32-bit word, low lane in the low half.
struct PackedPair {
  uint32_t raw = 0;

  static PackedPair pack(int16_t lo, int16_t hi) {
    PackedPair p;
    p.raw = uint32_t(uint16_t(lo)) | (uint32_t(uint16_t(hi)) << 16);
    return p;
  }

  int16_t lo() const { return int16_t(uint16_t(raw & 0xffffu)); }
  int16_t hi() const { return int16_t(uint16_t(raw >> 16)); }
};

/// acc + a.lo*b.lo + a.hi*b.hi with two's-complement wraparound, matching
/// the hardware instruction (no saturation).
inline int32_t smlad(PackedPair a, PackedPair b, int32_t acc) {
  const int32_t p0 = int32_t(a.lo()) * int32_t(b.lo());
  const int32_t p1 = int32_t(a.hi()) * int32_t(b.hi());
  return int32_t(uint32_t(acc) + uint32_t(p0) + uint32_t(p1));
}

/// Wrapping int32 accumulate of one int16 product (the scalar half of the
/// dual-MAC; same wraparound semantics so scalar and SIMD paths agree
/// bit-for-bit).
inline int32_t mac_i16(int16_t a, int16_t b, int32_t acc) {
  return int32_t(uint32_t(acc) + uint32_t(int32_t(a) * int32_t(b)));
}

/// Round-half-up arithmetic right shift, saturated to int16.
inline int16_t requantize(int32_t acc, int shift) {
  if (shift < 0) throw config_error("requantize: shift must be >= 0");
  if (shift == 0) return saturate_i16(acc);
  const int64_t rounded = (int64_t(acc) + (int64_t(1) << (shift - 1))) >> shift;
  return saturate_i16(rounded);
}

}  // namespace kws
