#pragma once

#include <cstdint>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "kws/costmodel.hpp"
#include "kws/errors.hpp"
#include "kws/frontend.hpp"
#include "kws/model.hpp"

namespace kws {

// Dual-task runtime emulation: a feature task pushes one mel column per
// 512-sample hop; once the ring is full, each hop is followed by an atomic
// snapshot + normalize + inference. Timestamps are simulated from hop
// arithmetic (32 ms per hop), never from the wall clock, so runs are
// reproducible on any host.

inline constexpr double kHopPeriodMs = 1000.0 * kHopSize / kSampleRate;  // 32

struct StreamEvent {
  int64_t tick = 0;           // hop index, 1-based
  double timestamp_ms = 0.0;  // tick * 32 ms
  int label_index = 0;
  std::string label;
  std::vector<double> probabilities;
  double est_frontend_ms = 0.0;
  double est_inference_ms = 0.0;
};

inline std::vector<StreamEvent> run_stream(std::span<const float> samples,
                                           const WeightSet& weights,
                                           const ExecStrategy& strategy,
                                           const CostParams& params) {
  strategy.validate();
  check_shapes(weights);
  const size_t hops = samples.size() / kHopSize;
  if (hops < size_t(kNumColumns)) {
    throw shape_error("audio too short: need at least 1 s (30 hops), got " +
                      std::to_string(hops));
  }
  const MelFilterbank& fb = default_filterbank();
  SampleWindow window;
  SpectrogramRing ring;
  std::vector<StreamEvent> events;
  events.reserve(hops - kNumColumns + 1);
  for (size_t h = 0; h < hops; ++h) {
    window.shift_in(samples.subspan(h * kHopSize, kHopSize));
    ring.push(column_from_window(window, fb));
    if (!ring.full()) continue;
    const Spectrogram spec = snapshot_normalize(ring);
    const InferResult res = infer(spec, weights, strategy);
    StreamEvent ev;
    ev.tick = int64_t(h) + 1;
    ev.timestamp_ms = double(ev.tick) * kHopPeriodMs;
    ev.label_index = res.logits.label_index;
    ev.label = weights.config.labels.empty()
                   ? std::to_string(ev.label_index)
                   : weights.config.labels[size_t(ev.label_index)];
    ev.probabilities = res.logits.probabilities;
    ev.est_frontend_ms = frontend_estimate_ms(params);
    ev.est_inference_ms = estimate_ms(res.counters, strategy.numeric, params);
    events.push_back(std::move(ev));
  }
  return events;
}

inline void write_events_csv(const std::vector<StreamEvent>& events,
                             const ModelConfig& cfg, std::ostream& os) {
  os << "tick,timestamp_ms,label";
  for (const auto& l : cfg.labels) os << ",p_" << l;
  os << ",est_frontend_ms,est_inference_ms\n";
  os.precision(10);
  for (const auto& ev : events) {
    os << ev.tick << ',' << ev.timestamp_ms << ',' << ev.label;
    for (double p : ev.probabilities) os << ',' << p;
    os << ',' << ev.est_frontend_ms << ',' << ev.est_inference_ms << '\n';
  }
}

inline std::string events_csv(const std::vector<StreamEvent>& events,
                              const ModelConfig& cfg) {
  std::ostringstream os;
  write_events_csv(events, cfg, os);
  return os.str();
}

}  // namespace kws
