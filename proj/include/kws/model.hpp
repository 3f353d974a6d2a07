#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "kws/errors.hpp"
#include "kws/frontend.hpp"
#include "kws/kernels.hpp"
#include "kws/quant.hpp"

namespace kws {

// Network shape: one conv layer (kernel spans the full time axis, strided
// in frequency) followed by four fully connected layers and a softmax over
// six labels. Activations: ReLU after the conv and after the two 128-unit
// hidden layers; the 32-unit bottleneck and the output layer are linear.

struct ModelConfig {
  int input_rows = 40;  // frequency
  int input_cols = 30;  // time
  int conv_out_channels = 186;
  int kernel_rows = 8;
  int kernel_cols = 30;
  int row_stride = 4;
  int col_stride = 1;
  std::vector<int> fc_sizes = {32, 128, 128, 6};
  std::vector<std::string> labels = {"yes",   "no",         "left",
                                     "right", "background", "unknown"};

  ConvShape conv_shape() const {
    ConvShape s;
    s.out_channels = conv_out_channels;
    s.in_channels = 1;
    s.in_rows = input_rows;
    s.in_cols = input_cols;
    s.k_rows = kernel_rows;
    s.k_cols = kernel_cols;
    s.row_stride = row_stride;
    return s;
  }

  int conv_out_rows() const { return conv_shape().out_rows(); }
  int conv_out_cols() const { return conv_shape().out_cols(); }
  int flatten_size() const {
    return conv_out_channels * conv_out_rows() * conv_out_cols();
  }
  int num_fc_layers() const { return int(fc_sizes.size()); }
  int fc_in_dim(int layer) const {
    return layer == 0 ? flatten_size() : fc_sizes[layer - 1];
  }
  int fc_out_dim(int layer) const { return fc_sizes[layer]; }
  /// ReLU after the hidden 128-wide layers only.
  bool fc_relu(int layer) const {
    return layer > 0 && layer + 1 < num_fc_layers();
  }
  int num_labels() const {
    return fc_sizes.empty() ? 0 : fc_sizes.back();
  }

  void validate() const {
    conv_shape().validate();
    if (col_stride != 1) throw shape_error("column stride must be 1");
    if (!fc_sizes.empty() && !labels.empty() &&
        int(labels.size()) != fc_sizes.back()) {
      throw shape_error("label count does not match the output layer size");
    }
  }
};

// ---------------------------------------------------------------------------
// Accounting

struct ParamCounts {
  int64_t conv_weights = 0;
  int64_t conv_biases = 0;
  std::vector<int64_t> fc_per_layer;  // weights + biases per layer
  int64_t conv_total = 0;
  int64_t fc_total = 0;
  int64_t total = 0;
};

inline ParamCounts param_count(const ModelConfig& cfg) {
  cfg.validate();
  ParamCounts p;
  p.conv_weights = cfg.conv_shape().weight_count();
  p.conv_biases = cfg.conv_out_channels;
  p.conv_total = p.conv_weights + p.conv_biases;
  for (int l = 0; l < cfg.num_fc_layers(); ++l) {
    const int64_t n =
        int64_t(cfg.fc_out_dim(l)) * cfg.fc_in_dim(l) + cfg.fc_out_dim(l);
    p.fc_per_layer.push_back(n);
    p.fc_total += n;
  }
  p.total = p.conv_total + p.fc_total;
  return p;
}

struct MacCounts {
  int64_t conv = 0;
  std::vector<int64_t> fc_per_layer;
  int64_t fc_total = 0;
  int64_t total = 0;
};

inline MacCounts mac_count(const ModelConfig& cfg) {
  cfg.validate();
  MacCounts m;
  const ConvShape s = cfg.conv_shape();
  m.conv = s.output_count() * s.weights_per_channel();
  for (int l = 0; l < cfg.num_fc_layers(); ++l) {
    const int64_t n = int64_t(cfg.fc_out_dim(l)) * cfg.fc_in_dim(l);
    m.fc_per_layer.push_back(n);
    m.fc_total += n;
  }
  m.total = m.conv + m.fc_total;
  return m;
}

// ---------------------------------------------------------------------------
// Weights

enum class WeightDtype { f32, i16 };

/// All layer weights and biases in storage order
/// (out-channel -> in-channel -> row -> col for the conv kernel,
/// out -> in row-major for FC layers). A set is either float32 or
/// int16-quantized; the quantized form carries per-tensor power-of-two
/// exponents, static activation exponents, and biases rescaled to the
/// int32 accumulator scale at load time.
struct WeightSet {
  ModelConfig config;
  WeightDtype dtype = WeightDtype::f32;

  // float32 payload
  std::vector<float> conv_w;
  std::vector<float> conv_b;
  struct FcLayerF32 {
    std::vector<float> w;
    std::vector<float> b;
  };
  std::vector<FcLayerF32> fc;

  // int16 payload
  std::vector<int16_t> conv_wq;
  std::vector<int16_t> conv_bq;  // at their own scale, as serialized
  struct FcLayerI16 {
    std::vector<int16_t> w;
    std::vector<int16_t> b;
    QParams w_exp;
    QParams b_exp;
  };
  std::vector<FcLayerI16> fcq;
  QParams conv_w_exp;
  QParams conv_b_exp;
  /// act_exps[0] = model input, act_exps[1] = conv output,
  /// act_exps[1 + l] = output of FC layer l-1 ... i.e. one per stage.
  std::vector<int8_t> act_exps;

  // runtime-only: biases at the accumulator scale (weight exp + input exp)
  std::vector<int32_t> conv_b32;
  std::vector<std::vector<int32_t>> fc_b32;

  static WeightSet zeros(const ModelConfig& cfg) {
    cfg.validate();
    WeightSet w;
    w.config = cfg;
    w.conv_w.assign(size_t(cfg.conv_shape().weight_count()), 0.0f);
    w.conv_b.assign(size_t(cfg.conv_out_channels), 0.0f);
    w.fc.resize(cfg.num_fc_layers());
    for (int l = 0; l < cfg.num_fc_layers(); ++l) {
      w.fc[l].w.assign(size_t(cfg.fc_out_dim(l)) * cfg.fc_in_dim(l), 0.0f);
      w.fc[l].b.assign(size_t(cfg.fc_out_dim(l)), 0.0f);
    }
    return w;
  }
};

inline void check_shapes(const WeightSet& w) {
  const ModelConfig& cfg = w.config;
  cfg.validate();
  const size_t conv_wn = size_t(cfg.conv_shape().weight_count());
  const size_t conv_bn = size_t(cfg.conv_out_channels);
  if (w.dtype == WeightDtype::f32) {
    if (w.conv_w.size() != conv_wn || w.conv_b.size() != conv_bn) {
      throw shape_error("conv tensor sizes do not match the model config");
    }
    if (int(w.fc.size()) != cfg.num_fc_layers()) {
      throw shape_error("wrong number of FC layers");
    }
    for (int l = 0; l < cfg.num_fc_layers(); ++l) {
      if (w.fc[l].w.size() != size_t(cfg.fc_out_dim(l)) * cfg.fc_in_dim(l) ||
          w.fc[l].b.size() != size_t(cfg.fc_out_dim(l))) {
        throw shape_error("fc layer " + std::to_string(l) + " size mismatch");
      }
    }
  } else {
    if (w.conv_wq.size() != conv_wn || w.conv_bq.size() != conv_bn ||
        w.conv_b32.size() != conv_bn) {
      throw shape_error("conv tensor sizes do not match the model config");
    }
    if (int(w.fcq.size()) != cfg.num_fc_layers() ||
        int(w.fc_b32.size()) != cfg.num_fc_layers()) {
      throw shape_error("wrong number of FC layers");
    }
    for (int l = 0; l < cfg.num_fc_layers(); ++l) {
      if (w.fcq[l].w.size() != size_t(cfg.fc_out_dim(l)) * cfg.fc_in_dim(l) ||
          w.fcq[l].b.size() != size_t(cfg.fc_out_dim(l))) {
        throw shape_error("fc layer " + std::to_string(l) + " size mismatch");
      }
    }
    if (int(w.act_exps.size()) != cfg.num_fc_layers() + 2) {
      throw shape_error("activation exponent count mismatch");
    }
  }
}

// ---------------------------------------------------------------------------
// Inference

struct Logits {
  std::vector<float> values;          // pre-softmax scores
  std::vector<double> probabilities;  // softmax output
  int label_index = 0;                // argmax, ties -> lowest index
};

inline std::vector<double> softmax(std::span<const float> values) {
  double max_v = -std::numeric_limits<double>::infinity();
  for (float v : values) max_v = std::max(max_v, double(v));
  std::vector<double> out(values.size());
  double sum = 0.0;
  for (size_t i = 0; i < values.size(); ++i) {
    out[i] = std::exp(double(values[i]) - max_v);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

inline Logits make_logits(std::vector<float> scores) {
  Logits l;
  l.values = std::move(scores);
  l.probabilities = softmax(l.values);
  l.label_index = int(std::max_element(l.probabilities.begin(),
                                       l.probabilities.end()) -
                      l.probabilities.begin());
  return l;
}

struct InferResult {
  Logits logits;
  ExecCounters counters;
};

namespace detail {

/// 30x40 time-major spectrogram -> 40x30 freq-major conv input.
inline std::vector<float> to_conv_input(const Spectrogram& spec,
                                        const ModelConfig& cfg) {
  if (spec.cols != cfg.input_cols || spec.bands != cfg.input_rows) {
    throw shape_error("spectrogram is " + std::to_string(spec.cols) + "x" +
                      std::to_string(spec.bands) + ", model wants " +
                      std::to_string(cfg.input_cols) + "x" +
                      std::to_string(cfg.input_rows));
  }
  std::vector<float> in(size_t(cfg.input_rows) * cfg.input_cols);
  for (int f = 0; f < cfg.input_rows; ++f) {
    for (int t = 0; t < cfg.input_cols; ++t) {
      in[size_t(f) * cfg.input_cols + t] = spec.at(t, f);
    }
  }
  return in;
}

inline InferResult infer_f32(const Spectrogram& spec, const WeightSet& w,
                             const ExecStrategy& strategy) {
  const ModelConfig& cfg = w.config;
  const ConvShape shape = cfg.conv_shape();
  const std::vector<float> input = to_conv_input(spec, cfg);
  ExecCounters c;

  // conv (pre-activation), then ReLU while flattening
  std::vector<float> flat(size_t(cfg.flatten_size()), 0.0f);
  if (strategy.zero_handling == ZeroHandling::channel_reduced) {
    const auto reduced = conv_channel_reduced(input, shape, w.conv_w, w.conv_b,
                                              *strategy.keep, c);
    const size_t per_ch = size_t(shape.out_rows()) * shape.out_cols();
    for (size_t i = 0; i < reduced.keep.size(); ++i) {
      for (size_t j = 0; j < per_ch; ++j) {
        flat[size_t(reduced.keep[i]) * per_ch + j] =
            std::max(reduced.values[i * per_ch + j], 0.0f);
      }
    }
  } else {
    std::vector<float> conv_out;
    switch (strategy.zero_handling) {
      case ZeroHandling::vector_mask:
        conv_out =
            conv_vector_mask(input, shape, w.conv_w, w.conv_b, *strategy.mask, c);
        break;
      default:
        if (strategy.loop_order == LoopOrder::weight_prioritized) {
          conv_out = conv_weight_prioritized(
              input, shape, w.conv_w, w.conv_b,
              strategy.zero_handling == ZeroHandling::skip_if, c);
        } else {
          conv_out =
              conv_normal(input, shape, w.conv_w, w.conv_b,
                          strategy.zero_handling == ZeroHandling::skip_if, c);
        }
        break;
    }
    for (size_t i = 0; i < conv_out.size(); ++i) {
      flat[i] = std::max(conv_out[i], 0.0f);
    }
  }

  std::vector<float> act = std::move(flat);
  for (int l = 0; l < cfg.num_fc_layers(); ++l) {
    act = fc_forward(act, w.fc[l].w, w.fc[l].b, cfg.fc_relu(l), c);
  }
  return {make_logits(std::move(act)), c};
}

/// Right shift taking the int32 accumulator scale (w_exp + in_exp) to the
/// stage's output scale. Calibration guarantees it is non-negative.
inline int requant_shift(int out_exp, int w_exp, int in_exp) {
  const int shift = out_exp - (w_exp + in_exp);
  if (shift < 0) {
    throw shape_error("negative requantization shift; file not calibrated");
  }
  return shift;
}

inline InferResult infer_i16(const Spectrogram& spec, const WeightSet& w,
                             const ExecStrategy& strategy) {
  const ModelConfig& cfg = w.config;
  const ConvShape shape = cfg.conv_shape();
  const std::vector<float> input_f = to_conv_input(spec, cfg);
  const bool simd = strategy.numeric == NumericMode::i16_simd;
  ExecCounters c;

  const QParams in_q{w.act_exps[0]};
  const std::vector<int16_t> input = quantize(input_f, in_q);

  Int16ConvOptions opt;
  opt.loop_order = strategy.loop_order;
  opt.skip_zero = strategy.zero_handling == ZeroHandling::skip_if;
  opt.simd = simd;
  opt.requant_shift =
      requant_shift(w.act_exps[1], w.conv_w_exp.exponent, w.act_exps[0]);
  const std::vector<int16_t> conv_out =
      conv_int16(input, shape, w.conv_wq, w.conv_b32, opt, c);

  std::vector<int16_t> act(conv_out.size());
  for (size_t i = 0; i < conv_out.size(); ++i) {
    act[i] = std::max<int16_t>(conv_out[i], 0);
  }

  int in_exp = w.act_exps[1];
  for (int l = 0; l < cfg.num_fc_layers(); ++l) {
    const int out_exp = w.act_exps[2 + l];
    const int shift = requant_shift(out_exp, w.fcq[l].w_exp.exponent, in_exp);
    act = fc_int16(act, w.fcq[l].w, w.fc_b32[l], shift, cfg.fc_relu(l), simd, c);
    in_exp = out_exp;
  }

  std::vector<float> scores(act.size());
  const QParams out_q{int8_t(in_exp)};
  for (size_t i = 0; i < act.size(); ++i) {
    scores[i] = dequantize_value(act[i], out_q);
  }
  return {make_logits(std::move(scores)), c};
}

}  // namespace detail

/// Full forward pass: conv -> ReLU -> flatten -> FC(32, linear) ->
/// FC(128, ReLU) -> FC(128, ReLU) -> FC(6) -> softmax.
inline InferResult infer(const Spectrogram& spec, const WeightSet& w,
                         const ExecStrategy& strategy) {
  strategy.validate();
  check_shapes(w);
  if (strategy.zero_handling == ZeroHandling::vector_mask) {
    strategy.mask->validate(w.config.conv_shape());
  }
  if (strategy.zero_handling == ZeroHandling::channel_reduced) {
    validate_keep_list(*strategy.keep, w.config.conv_out_channels);
  }
  const bool wants_f32 = strategy.numeric == NumericMode::f32;
  if (wants_f32 != (w.dtype == WeightDtype::f32)) {
    throw shape_error("strategy numeric mode does not match weight dtype");
  }
  return wants_f32 ? detail::infer_f32(spec, w, strategy)
                   : detail::infer_i16(spec, w, strategy);
}

}  // namespace kws
