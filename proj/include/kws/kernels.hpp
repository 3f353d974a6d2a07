#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "kws/errors.hpp"
#include "kws/quant.hpp"

namespace kws {

// Interchangeable convolution execution strategies, each instrumented with
// exact event counters. The counter contract (fixed; the cost model and the
// brute-force recount tests both depend on it):
//
//   macs         multiply-accumulates actually executed (logical MACs in
//                SIMD mode: one packed op counts 2)
//   weight_loads weight memory reads (one per packed pair in SIMD mode)
//   act_reads    input-activation reads (one per packed pair in SIMD mode)
//   act_writes   output-buffer accesses: a store from a register accumulator
//                counts 1, a read-modify-write counts 2 (load + store)
//   branch_evals zero-test "if" evaluations
//   simd_ops     packed dual-MAC instructions
//
// Loop index arithmetic is never counted.

struct ExecCounters {
  uint64_t macs = 0;
  uint64_t weight_loads = 0;
  uint64_t act_reads = 0;
  uint64_t act_writes = 0;
  uint64_t branch_evals = 0;
  uint64_t simd_ops = 0;

  ExecCounters& operator+=(const ExecCounters& o) {
    macs += o.macs;
    weight_loads += o.weight_loads;
    act_reads += o.act_reads;
    act_writes += o.act_writes;
    branch_evals += o.branch_evals;
    simd_ops += o.simd_ops;
    return *this;
  }

  friend bool operator==(const ExecCounters&, const ExecCounters&) = default;
};

enum class LoopOrder { normal, weight_prioritized };
enum class ZeroHandling { none, skip_if, vector_mask, channel_reduced };
enum class NumericMode { f32, i16, i16_simd };

inline std::string to_string(LoopOrder o) {
  return o == LoopOrder::normal ? "normal" : "wp";
}

inline std::string to_string(ZeroHandling z) {
  switch (z) {
    case ZeroHandling::none: return "none";
    case ZeroHandling::skip_if: return "skip";
    case ZeroHandling::vector_mask: return "vector";
    case ZeroHandling::channel_reduced: return "channels";
  }
  return "?";
}

inline std::string to_string(NumericMode m) {
  switch (m) {
    case NumericMode::f32: return "f32";
    case NumericMode::i16: return "i16";
    case NumericMode::i16_simd: return "i16simd";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Geometry

/// Valid cross-correlation with a row stride; the kernel spans the full
/// input width when k_cols == in_cols (the single-output-column case).
struct ConvShape {
  int out_channels = 186;
  int in_channels = 1;
  int in_rows = 40;
  int in_cols = 30;
  int k_rows = 8;
  int k_cols = 30;
  int row_stride = 4;

  int out_rows() const { return (in_rows - k_rows) / row_stride + 1; }
  int out_cols() const { return in_cols - k_cols + 1; }
  int64_t weights_per_channel() const { return int64_t(k_rows) * k_cols; }
  int64_t weight_count() const {
    return int64_t(out_channels) * in_channels * k_rows * k_cols;
  }
  int64_t output_count() const {
    return int64_t(out_channels) * out_rows() * out_cols();
  }

  void validate() const {
    if (out_channels <= 0 || in_rows <= 0 || in_cols <= 0 || k_rows <= 0 ||
        k_cols <= 0 || row_stride <= 0) {
      throw shape_error("conv shape: all dimensions must be positive");
    }
    if (in_channels != 1) {
      throw shape_error("conv shape: single input channel only");
    }
    if (k_rows > in_rows || k_cols > in_cols) {
      throw shape_error("conv shape: kernel larger than input");
    }
    if ((in_rows - k_rows) % row_stride != 0) {
      throw shape_error("conv shape: (in_rows - k_rows) not divisible by stride");
    }
  }
};

/// Kernel-row keep mask, [out_channel][in_channel][kernel_row]; true = kept.
struct VectorMask {
  int out_channels = 0;
  int in_channels = 1;
  int k_rows = 0;
  std::vector<uint8_t> keep;

  static VectorMask all_pass(const ConvShape& s) {
    VectorMask m;
    m.out_channels = s.out_channels;
    m.in_channels = s.in_channels;
    m.k_rows = s.k_rows;
    m.keep.assign(size_t(s.out_channels) * s.in_channels * s.k_rows, 1);
    return m;
  }

  bool kept(int oc, int kr) const {
    return keep[size_t(oc) * in_channels * k_rows + kr] != 0;
  }

  void set(int oc, int kr, bool k) {
    keep[size_t(oc) * in_channels * k_rows + kr] = k ? 1 : 0;
  }

  int64_t kept_rows() const {
    int64_t n = 0;
    for (uint8_t k : keep) n += k != 0;
    return n;
  }

  void validate(const ConvShape& s) const {
    if (out_channels != s.out_channels || in_channels != s.in_channels ||
        k_rows != s.k_rows ||
        keep.size() != size_t(s.out_channels) * s.in_channels * s.k_rows) {
      throw shape_error("vector mask dimensions do not match conv shape");
    }
  }
};

inline void validate_keep_list(std::span<const int> keep, int out_channels) {
  std::vector<uint8_t> seen(size_t(out_channels), 0);
  for (int c : keep) {
    if (c < 0 || c >= out_channels) {
      throw shape_error("keep list: channel " + std::to_string(c) +
                        " out of range");
    }
    if (seen[size_t(c)]) {
      throw shape_error("keep list: duplicate channel " + std::to_string(c));
    }
    seen[size_t(c)] = 1;
  }
}

// ---------------------------------------------------------------------------
// Strategy selector

struct ExecStrategy {
  LoopOrder loop_order = LoopOrder::normal;
  ZeroHandling zero_handling = ZeroHandling::none;
  NumericMode numeric = NumericMode::f32;
  std::optional<VectorMask> mask;       // required for vector_mask
  std::optional<std::vector<int>> keep; // required for channel_reduced

  void validate() const {
    if (zero_handling == ZeroHandling::vector_mask && !mask) {
      throw config_error("vector-mask strategy needs a mask");
    }
    if (zero_handling == ZeroHandling::channel_reduced && !keep) {
      throw config_error("channel-reduced strategy needs a keep list");
    }
    if (numeric == NumericMode::i16_simd) {
      if (loop_order != LoopOrder::normal) {
        throw config_error("i16simd requires the normal loop order");
      }
      if (zero_handling != ZeroHandling::none) {
        throw config_error("i16simd cannot be combined with zero handling");
      }
    }
    if ((zero_handling == ZeroHandling::vector_mask ||
         zero_handling == ZeroHandling::channel_reduced) &&
        loop_order != LoopOrder::normal) {
      throw config_error("structured skipping uses the normal loop order");
    }
  }

  std::string name() const {
    if (loop_order == LoopOrder::weight_prioritized) {
      return zero_handling == ZeroHandling::skip_if ? "wp-skip" : "wp";
    }
    return to_string(zero_handling) == "none" ? "normal"
                                              : to_string(zero_handling);
  }
};

// ---------------------------------------------------------------------------
// float32 convolutions
//
// Input is freq-major [in_rows][in_cols]; weights are stored
// out-channel -> in-channel -> row -> col; output is [out_channels][out_rows]
// [out_cols], channel-major, pre-activation.

inline void check_conv_args(const ConvShape& s, size_t in_size, size_t w_size,
                            size_t b_size) {
  s.validate();
  if (in_size != size_t(s.in_rows) * s.in_cols) {
    throw shape_error("conv input size mismatch");
  }
  if (w_size != size_t(s.weight_count())) {
    throw shape_error("conv weight size mismatch");
  }
  if (b_size != size_t(s.out_channels)) {
    throw shape_error("conv bias size mismatch");
  }
}

inline std::vector<float> conv_normal(std::span<const float> input,
                                      const ConvShape& s,
                                      std::span<const float> weights,
                                      std::span<const float> biases,
                                      bool skip_zero, ExecCounters& c) {
  check_conv_args(s, input.size(), weights.size(), biases.size());
  const int orows = s.out_rows();
  const int ocols = s.out_cols();
  std::vector<float> out(size_t(s.out_channels) * orows * ocols);
  for (int oc = 0; oc < s.out_channels; ++oc) {
    const float* w = weights.data() + size_t(oc) * s.weights_per_channel();
    for (int r = 0; r < orows; ++r) {
      for (int col = 0; col < ocols; ++col) {
        float acc = biases[oc];  // running sum lives in a register
        for (int kr = 0; kr < s.k_rows; ++kr) {
          const float* in_row =
              input.data() + size_t(r * s.row_stride + kr) * s.in_cols + col;
          const float* w_row = w + size_t(kr) * s.k_cols;
          for (int kc = 0; kc < s.k_cols; ++kc) {
            c.weight_loads++;
            const float wv = w_row[kc];
            if (skip_zero) {
              c.branch_evals++;
              if (wv == 0.0f) continue;
            }
            c.act_reads++;
            c.macs++;
            acc += wv * in_row[kc];
          }
        }
        c.act_writes++;
        out[(size_t(oc) * orows + r) * ocols + col] = acc;
      }
    }
  }
  return out;
}

inline std::vector<float> conv_vector_mask(std::span<const float> input,
                                           const ConvShape& s,
                                           std::span<const float> weights,
                                           std::span<const float> biases,
                                           const VectorMask& mask,
                                           ExecCounters& c) {
  check_conv_args(s, input.size(), weights.size(), biases.size());
  mask.validate(s);
  const int orows = s.out_rows();
  const int ocols = s.out_cols();
  std::vector<float> out(size_t(s.out_channels) * orows * ocols);
  for (int oc = 0; oc < s.out_channels; ++oc) {
    const float* w = weights.data() + size_t(oc) * s.weights_per_channel();
    for (int r = 0; r < orows; ++r) {
      for (int col = 0; col < ocols; ++col) {
        float acc = biases[oc];
        for (int kr = 0; kr < s.k_rows; ++kr) {
          c.branch_evals++;  // one mask test guards the whole kernel row
          if (!mask.kept(oc, kr)) continue;
          const float* in_row =
              input.data() + size_t(r * s.row_stride + kr) * s.in_cols + col;
          const float* w_row = w + size_t(kr) * s.k_cols;
          for (int kc = 0; kc < s.k_cols; ++kc) {
            c.weight_loads++;
            c.act_reads++;
            c.macs++;
            acc += w_row[kc] * in_row[kc];
          }
        }
        c.act_writes++;
        out[(size_t(oc) * orows + r) * ocols + col] = acc;
      }
    }
  }
  return out;
}

/// Computes only the kept channels. `values` holds |keep| channels in
/// keep-list order; removed channels simply do not exist here and are
/// zero-filled when flattened downstream.
struct ChannelReducedOutput {
  std::vector<int> keep;
  std::vector<float> values;  // [keep.size()][out_rows][out_cols]
};

inline ChannelReducedOutput conv_channel_reduced(std::span<const float> input,
                                                 const ConvShape& s,
                                                 std::span<const float> weights,
                                                 std::span<const float> biases,
                                                 std::span<const int> keep,
                                                 ExecCounters& c) {
  check_conv_args(s, input.size(), weights.size(), biases.size());
  validate_keep_list(keep, s.out_channels);
  const int orows = s.out_rows();
  const int ocols = s.out_cols();
  ChannelReducedOutput out;
  out.keep.assign(keep.begin(), keep.end());
  out.values.resize(keep.size() * size_t(orows) * ocols);
  size_t slot = 0;
  for (int oc : keep) {
    const float* w = weights.data() + size_t(oc) * s.weights_per_channel();
    for (int r = 0; r < orows; ++r) {
      for (int col = 0; col < ocols; ++col) {
        float acc = biases[oc];
        for (int kr = 0; kr < s.k_rows; ++kr) {
          const float* in_row =
              input.data() + size_t(r * s.row_stride + kr) * s.in_cols + col;
          const float* w_row = w + size_t(kr) * s.k_cols;
          for (int kc = 0; kc < s.k_cols; ++kc) {
            c.weight_loads++;
            c.act_reads++;
            c.macs++;
            acc += w_row[kc] * in_row[kc];
          }
        }
        c.act_writes++;
        out.values[slot++] = acc;
      }
    }
  }
  return out;
}

/// Weights outermost: every weight is loaded once and all of its output
/// contributions are finished before the next weight, via read-modify-write
/// into the output buffer. One zero test per weight skips all of its MACs.
inline std::vector<float> conv_weight_prioritized(std::span<const float> input,
                                                  const ConvShape& s,
                                                  std::span<const float> weights,
                                                  std::span<const float> biases,
                                                  bool skip_zero,
                                                  ExecCounters& c) {
  check_conv_args(s, input.size(), weights.size(), biases.size());
  const int orows = s.out_rows();
  const int ocols = s.out_cols();
  std::vector<float> out(size_t(s.out_channels) * orows * ocols);
  for (int oc = 0; oc < s.out_channels; ++oc) {
    for (int r = 0; r < orows; ++r) {
      for (int col = 0; col < ocols; ++col) {
        c.act_writes++;  // pre-initialize with the bias
        out[(size_t(oc) * orows + r) * ocols + col] = biases[oc];
      }
    }
  }
  for (int oc = 0; oc < s.out_channels; ++oc) {
    const float* w = weights.data() + size_t(oc) * s.weights_per_channel();
    float* out_ch = out.data() + size_t(oc) * orows * ocols;
    for (int kr = 0; kr < s.k_rows; ++kr) {
      for (int kc = 0; kc < s.k_cols; ++kc) {
        c.weight_loads++;
        const float wv = w[size_t(kr) * s.k_cols + kc];
        if (skip_zero) {
          c.branch_evals++;
          if (wv == 0.0f) continue;
        }
        for (int r = 0; r < orows; ++r) {
          const float* in_row =
              input.data() + size_t(r * s.row_stride + kr) * s.in_cols + kc;
          for (int col = 0; col < ocols; ++col) {
            c.act_reads++;
            c.macs++;
            c.act_writes += 2;  // read-modify-write of the output element
            out_ch[size_t(r) * ocols + col] += wv * in_row[col];
          }
        }
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// float32 fully connected

inline std::vector<float> fc_forward(std::span<const float> input,
                                     std::span<const float> weights,
                                     std::span<const float> biases, bool relu,
                                     ExecCounters& c) {
  const size_t out_dim = biases.size();
  const size_t in_dim = input.size();
  if (weights.size() != out_dim * in_dim) {
    throw shape_error("fc weight size mismatch");
  }
  std::vector<float> out(out_dim);
  for (size_t j = 0; j < out_dim; ++j) {
    float acc = biases[j];
    const float* w = weights.data() + j * in_dim;
    for (size_t i = 0; i < in_dim; ++i) {
      c.weight_loads++;
      c.act_reads++;
      c.macs++;
      acc += w[i] * input[i];
    }
    c.act_writes++;
    out[j] = relu ? std::max(acc, 0.0f) : acc;
  }
  return out;
}

// ---------------------------------------------------------------------------
// int16 kernels (int32 accumulation with wraparound, requantized on store)

struct Int16ConvOptions {
  LoopOrder loop_order = LoopOrder::normal;
  bool skip_zero = false;
  bool simd = false;
  int requant_shift = 0;  // accumulator scale -> output scale
};

inline std::vector<int16_t> conv_int16(std::span<const int16_t> input,
                                       const ConvShape& s,
                                       std::span<const int16_t> weights,
                                       std::span<const int32_t> biases,
                                       const Int16ConvOptions& opt,
                                       ExecCounters& c) {
  check_conv_args(s, input.size(), weights.size(), biases.size());
  if (opt.simd) {
    if (opt.loop_order != LoopOrder::normal || opt.skip_zero) {
      throw config_error("SIMD conv runs dense in the normal loop order");
    }
    if (s.k_cols % 2 != 0) {
      throw shape_error("SIMD conv needs an even kernel width");
    }
  }
  const int orows = s.out_rows();
  const int ocols = s.out_cols();
  std::vector<int16_t> out(size_t(s.out_channels) * orows * ocols);

  if (opt.loop_order == LoopOrder::weight_prioritized) {
    std::vector<int32_t> acc(out.size());
    for (int oc = 0; oc < s.out_channels; ++oc) {
      for (int r = 0; r < orows; ++r) {
        for (int col = 0; col < ocols; ++col) {
          c.act_writes++;
          acc[(size_t(oc) * orows + r) * ocols + col] = biases[oc];
        }
      }
    }
    for (int oc = 0; oc < s.out_channels; ++oc) {
      const int16_t* w = weights.data() + size_t(oc) * s.weights_per_channel();
      int32_t* acc_ch = acc.data() + size_t(oc) * orows * ocols;
      for (int kr = 0; kr < s.k_rows; ++kr) {
        for (int kc = 0; kc < s.k_cols; ++kc) {
          c.weight_loads++;
          const int16_t wv = w[size_t(kr) * s.k_cols + kc];
          if (opt.skip_zero) {
            c.branch_evals++;
            if (wv == 0) continue;
          }
          for (int r = 0; r < orows; ++r) {
            const int16_t* in_row =
                input.data() + size_t(r * s.row_stride + kr) * s.in_cols + kc;
            for (int col = 0; col < ocols; ++col) {
              c.act_reads++;
              c.macs++;
              c.act_writes += 2;
              int32_t& a = acc_ch[size_t(r) * ocols + col];
              a = mac_i16(wv, in_row[col], a);
            }
          }
        }
      }
    }
    for (size_t i = 0; i < out.size(); ++i) {
      out[i] = requantize(acc[i], opt.requant_shift);
    }
    return out;
  }

  for (int oc = 0; oc < s.out_channels; ++oc) {
    const int16_t* w = weights.data() + size_t(oc) * s.weights_per_channel();
    for (int r = 0; r < orows; ++r) {
      for (int col = 0; col < ocols; ++col) {
        int32_t acc = biases[oc];
        for (int kr = 0; kr < s.k_rows; ++kr) {
          const int16_t* in_row =
              input.data() + size_t(r * s.row_stride + kr) * s.in_cols + col;
          const int16_t* w_row = w + size_t(kr) * s.k_cols;
          if (opt.simd) {
            for (int kc = 0; kc < s.k_cols; kc += 2) {
              c.weight_loads++;  // one 32-bit load fetches the pair
              c.act_reads++;
              c.simd_ops++;
              c.macs += 2;
              acc = smlad(PackedPair::pack(w_row[kc], w_row[kc + 1]),
                          PackedPair::pack(in_row[kc], in_row[kc + 1]), acc);
            }
          } else {
            for (int kc = 0; kc < s.k_cols; ++kc) {
              c.weight_loads++;
              const int16_t wv = w_row[kc];
              if (opt.skip_zero) {
                c.branch_evals++;
                if (wv == 0) continue;
              }
              c.act_reads++;
              c.macs++;
              acc = mac_i16(wv, in_row[kc], acc);
            }
          }
        }
        c.act_writes++;
        out[(size_t(oc) * orows + r) * ocols + col] =
            requantize(acc, opt.requant_shift);
      }
    }
  }
  return out;
}

inline std::vector<int16_t> fc_int16(std::span<const int16_t> input,
                                     std::span<const int16_t> weights,
                                     std::span<const int32_t> biases,
                                     int requant_shift, bool relu, bool simd,
                                     ExecCounters& c) {
  const size_t out_dim = biases.size();
  const size_t in_dim = input.size();
  if (weights.size() != out_dim * in_dim) {
    throw shape_error("fc weight size mismatch");
  }
  if (simd && in_dim % 2 != 0) {
    throw shape_error("SIMD fc needs an even input size");
  }
  std::vector<int16_t> out(out_dim);
  for (size_t j = 0; j < out_dim; ++j) {
    int32_t acc = biases[j];
    const int16_t* w = weights.data() + j * in_dim;
    if (simd) {
      for (size_t i = 0; i < in_dim; i += 2) {
        c.weight_loads++;
        c.act_reads++;
        c.simd_ops++;
        c.macs += 2;
        acc = smlad(PackedPair::pack(w[i], w[i + 1]),
                    PackedPair::pack(input[i], input[i + 1]), acc);
      }
    } else {
      for (size_t i = 0; i < in_dim; ++i) {
        c.weight_loads++;
        c.act_reads++;
        c.macs++;
        acc = mac_i16(w[i], input[i], acc);
      }
    }
    c.act_writes++;
    const int16_t v = requantize(acc, requant_shift);
    out[j] = relu ? std::max<int16_t>(v, 0) : v;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Counter dump

inline void write_counters_csv_header(std::ostream& os) {
  os << "strategy,numeric,fraction,macs,weight_loads,act_reads,act_writes,"
        "branch_evals,simd_ops\n";
}

inline void write_counters_csv_row(std::ostream& os, const std::string& strategy,
                                   NumericMode numeric, double fraction,
                                   const ExecCounters& c) {
  os << strategy << ',' << to_string(numeric) << ',' << fraction << ','
     << c.macs << ',' << c.weight_loads << ',' << c.act_reads << ','
     << c.act_writes << ',' << c.branch_evals << ',' << c.simd_ops << '\n';
}

}  // namespace kws
