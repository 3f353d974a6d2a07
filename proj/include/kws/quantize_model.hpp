#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "kws/frontend.hpp"
#include "kws/kernels.hpp"
#include "kws/model.hpp"
#include "kws/quant.hpp"
#include "kws/weights_io.hpp"

namespace kws {

// float32 -> int16 model quantization. Weight and bias tensors get their own
// power-of-two scales; activation scales are static, calibrated once from a
// batch of synthetic normalized spectrograms and stored with the weights.

inline constexpr uint32_t kDefaultCalibrationSeed = 1234;
inline constexpr int kCalibrationSamples = 100;

inline Spectrogram synthetic_spectrogram(std::mt19937& rng,
                                         const ModelConfig& cfg) {
  Spectrogram s(cfg.input_cols, cfg.input_rows);
  for (float& v : s.values) v = detail::uniform_half(rng);
  return normalize(s);
}

/// Per-stage max |pre-activation| over the calibration batch:
/// [0] model input, [1] conv output, [1 + l] output of FC layer l-1.
inline std::vector<float> activation_ranges(const WeightSet& w,
                                            uint32_t seed,
                                            int samples = kCalibrationSamples) {
  check_shapes(w);
  if (w.dtype != WeightDtype::f32) {
    throw shape_error("activation calibration needs float32 weights");
  }
  const ModelConfig& cfg = w.config;
  const ConvShape shape = cfg.conv_shape();
  std::vector<float> max_abs(size_t(cfg.num_fc_layers()) + 2, 0.0f);
  std::mt19937 rng(seed);
  ExecCounters scratch;
  for (int n = 0; n < samples; ++n) {
    const Spectrogram spec = synthetic_spectrogram(rng, cfg);
    for (float v : spec.values) {
      max_abs[0] = std::max(max_abs[0], std::fabs(v));
    }
    const std::vector<float> input = detail::to_conv_input(spec, cfg);
    const std::vector<float> conv_out =
        conv_normal(input, shape, w.conv_w, w.conv_b, false, scratch);
    for (float v : conv_out) max_abs[1] = std::max(max_abs[1], std::fabs(v));
    std::vector<float> act(conv_out.size());
    for (size_t i = 0; i < conv_out.size(); ++i) {
      act[i] = std::max(conv_out[i], 0.0f);
    }
    for (int l = 0; l < cfg.num_fc_layers(); ++l) {
      // track the pre-ReLU range; that is what gets requantized
      std::vector<float> pre =
          fc_forward(act, w.fc[l].w, w.fc[l].b, false, scratch);
      for (float v : pre) {
        max_abs[size_t(2 + l)] = std::max(max_abs[size_t(2 + l)], std::fabs(v));
      }
      if (cfg.fc_relu(l)) {
        for (float& v : pre) v = std::max(v, 0.0f);
      }
      act = std::move(pre);
    }
  }
  return max_abs;
}

inline int8_t exponent_for_range(float max_abs) {
  if (max_abs == 0.0f) return -15;
  const std::vector<float> one = {max_abs};
  return int8_t(calibrate(one).exponent);
}

struct QuantizeOptions {
  uint32_t calibration_seed = kDefaultCalibrationSeed;
  int calibration_samples = kCalibrationSamples;
  /// Reuse previously calibrated activation exponents (e.g. the dense
  /// model's) instead of re-running calibration.
  std::vector<int8_t> fixed_act_exps;
};

/// Largest requantization shift allowed per layer. With activations hard-
/// bounded at 2^15 by saturation, an output at scale 2^(acc+14) keeps the
/// int32 accumulator below 2^30 for anything inside the calibrated range,
/// so wraparound never fires on in-distribution data.
inline constexpr int kMaxRequantShift = 14;

inline WeightSet quantize_weightset(const WeightSet& w,
                                    const QuantizeOptions& opt = {}) {
  check_shapes(w);
  if (w.dtype != WeightDtype::f32) {
    throw shape_error("quantize_weightset needs float32 weights");
  }
  const ModelConfig& cfg = w.config;

  WeightSet q;
  q.config = cfg;
  q.dtype = WeightDtype::i16;

  if (!opt.fixed_act_exps.empty()) {
    if (int(opt.fixed_act_exps.size()) != cfg.num_fc_layers() + 2) {
      throw shape_error("fixed activation exponent count mismatch");
    }
    q.act_exps = opt.fixed_act_exps;
  } else {
    const std::vector<float> ranges =
        activation_ranges(w, opt.calibration_seed, opt.calibration_samples);
    q.act_exps.resize(ranges.size());
    for (size_t i = 0; i < ranges.size(); ++i) {
      q.act_exps[i] = exponent_for_range(ranges[i]);
    }
  }

  // Weight scales start minimal and are coarsened where needed so that
  // 0 <= shift <= kMaxRequantShift at every stage. Coarsening weights (not
  // activations) keeps the precision loss local to one tensor instead of
  // cascading back through the activation chain.
  const auto pick_w_exp = [](int minimal, int out_exp, int in_exp) {
    return std::max(minimal, out_exp - in_exp - kMaxRequantShift);
  };

  q.conv_w_exp.exponent = pick_w_exp(calibrate(w.conv_w).exponent,
                                     q.act_exps[1], q.act_exps[0]);
  q.conv_wq = quantize(w.conv_w, q.conv_w_exp);
  q.act_exps[1] = std::max<int8_t>(
      q.act_exps[1], int8_t(q.conv_w_exp.exponent + q.act_exps[0]));
  q.conv_b_exp = calibrate(w.conv_b);
  q.conv_bq = quantize(w.conv_b, q.conv_b_exp);

  q.fcq.resize(cfg.num_fc_layers());
  int in_exp = q.act_exps[1];
  for (int l = 0; l < cfg.num_fc_layers(); ++l) {
    q.fcq[l].w_exp.exponent = pick_w_exp(calibrate(w.fc[l].w).exponent,
                                         q.act_exps[size_t(2 + l)], in_exp);
    q.fcq[l].w = quantize(w.fc[l].w, q.fcq[l].w_exp);
    q.act_exps[size_t(2 + l)] = std::max<int8_t>(
        q.act_exps[size_t(2 + l)], int8_t(q.fcq[l].w_exp.exponent + in_exp));
    q.fcq[l].b_exp = calibrate(w.fc[l].b);
    q.fcq[l].b = quantize(w.fc[l].b, q.fcq[l].b_exp);
    in_exp = q.act_exps[size_t(2 + l)];
  }

  rescale_biases_to_acc(q);
  check_shapes(q);
  return q;
}

}  // namespace kws
