#pragma once

// Shared test utilities: WAV synthesis, independent oracles (naive DFT,
// nested-loop conv/FC), deterministic random tensors, temp-file handling.
// Everything here is intentionally independent of the library's own
// implementation paths so it can serve as a reference.

#include <atomic>
#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <unistd.h>
#include <span>
#include <string>
#include <vector>

#include "kws/frontend.hpp"
#include "kws/kernels.hpp"
#include "kws/model.hpp"

namespace testutil {

// ---------------------------------------------------------------------------
// WAV synthesis

inline void append_u32le(std::vector<uint8_t>& v, uint32_t x) {
  for (int i = 0; i < 4; ++i) v.push_back(uint8_t((x >> (8 * i)) & 0xff));
}

inline void append_u16le(std::vector<uint8_t>& v, uint16_t x) {
  v.push_back(uint8_t(x & 0xff));
  v.push_back(uint8_t(x >> 8));
}

inline std::vector<uint8_t> make_wav(std::span<const int16_t> samples,
                                     int channels = 1, uint32_t rate = 16000,
                                     uint16_t bits = 16,
                                     uint16_t format = 1) {
  std::vector<uint8_t> v;
  const uint32_t data_bytes = uint32_t(samples.size() * 2);
  v.insert(v.end(), {'R', 'I', 'F', 'F'});
  append_u32le(v, 36 + data_bytes);
  v.insert(v.end(), {'W', 'A', 'V', 'E'});
  v.insert(v.end(), {'f', 'm', 't', ' '});
  append_u32le(v, 16);
  append_u16le(v, format);
  append_u16le(v, uint16_t(channels));
  append_u32le(v, rate);
  append_u32le(v, rate * uint32_t(channels) * bits / 8);
  append_u16le(v, uint16_t(channels * bits / 8));
  append_u16le(v, bits);
  v.insert(v.end(), {'d', 'a', 't', 'a'});
  append_u32le(v, data_bytes);
  for (int16_t s : samples) append_u16le(v, uint16_t(s));
  return v;
}

inline std::vector<int16_t> tone_samples(double freq_hz, double seconds,
                                         double amplitude = 0.5,
                                         int rate = 16000) {
  std::vector<int16_t> out(size_t(seconds * rate));
  for (size_t n = 0; n < out.size(); ++n) {
    const double v = amplitude * std::sin(2.0 * M_PI * freq_hz * double(n) / rate);
    out[n] = int16_t(std::lround(v * 32767.0));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Oracles

/// O(N^2) reference DFT.
inline std::vector<std::complex<double>> naive_dft(
    std::span<const float> frame) {
  const size_t n = frame.size();
  std::vector<std::complex<double>> out(n);
  for (size_t k = 0; k < n; ++k) {
    std::complex<double> acc(0.0, 0.0);
    for (size_t i = 0; i < n; ++i) {
      const double angle = -2.0 * M_PI * double(k) * double(i) / double(n);
      acc += double(frame[i]) * std::complex<double>(std::cos(angle),
                                                     std::sin(angle));
    }
    out[k] = acc;
  }
  return out;
}

/// Reference dense conv, float accumulation in storage order (matches the
/// normal loop order bit for bit when both run in float).
inline std::vector<float> naive_conv(std::span<const float> input,
                                     const kws::ConvShape& s,
                                     std::span<const float> weights,
                                     std::span<const float> biases) {
  const int orows = s.out_rows();
  const int ocols = s.out_cols();
  std::vector<float> out(size_t(s.out_channels) * orows * ocols);
  for (int oc = 0; oc < s.out_channels; ++oc) {
    for (int r = 0; r < orows; ++r) {
      for (int col = 0; col < ocols; ++col) {
        float acc = biases[oc];
        for (int kr = 0; kr < s.k_rows; ++kr) {
          for (int kc = 0; kc < s.k_cols; ++kc) {
            const float w =
                weights[(size_t(oc) * s.k_rows + kr) * s.k_cols + kc];
            const float x =
                input[size_t(r * s.row_stride + kr) * s.in_cols + col + kc];
            acc += w * x;
          }
        }
        out[(size_t(oc) * orows + r) * ocols + col] = acc;
      }
    }
  }
  return out;
}

inline std::vector<float> naive_fc(std::span<const float> input,
                                   std::span<const float> weights,
                                   std::span<const float> biases, bool relu) {
  std::vector<float> out(biases.size());
  for (size_t j = 0; j < biases.size(); ++j) {
    float acc = biases[j];
    for (size_t i = 0; i < input.size(); ++i) {
      acc += weights[j * input.size() + i] * input[i];
    }
    out[j] = relu ? std::max(acc, 0.0f) : acc;
  }
  return out;
}

/// Reference full forward pass (dense, normal order, float32).
inline std::vector<float> naive_infer_scores(const kws::Spectrogram& spec,
                                             const kws::WeightSet& w) {
  const kws::ModelConfig& cfg = w.config;
  std::vector<float> input(size_t(cfg.input_rows) * cfg.input_cols);
  for (int f = 0; f < cfg.input_rows; ++f) {
    for (int t = 0; t < cfg.input_cols; ++t) {
      input[size_t(f) * cfg.input_cols + t] = spec.at(t, f);
    }
  }
  auto conv = naive_conv(input, cfg.conv_shape(), w.conv_w, w.conv_b);
  std::vector<float> act(conv.size());
  for (size_t i = 0; i < conv.size(); ++i) act[i] = std::max(conv[i], 0.0f);
  for (int l = 0; l < cfg.num_fc_layers(); ++l) {
    act = naive_fc(act, w.fc[l].w, w.fc[l].b, cfg.fc_relu(l));
  }
  return act;
}

// ---------------------------------------------------------------------------
// Deterministic random data

inline float uniform_pm(std::mt19937& rng, float half_range = 0.5f) {
  return float((double(rng()) * (1.0 / 4294967296.0) - 0.5) * 2.0) * half_range;
}

inline kws::Spectrogram random_normalized_spectrogram(std::mt19937& rng,
                                                      int cols = 30,
                                                      int bands = 40) {
  kws::Spectrogram s(cols, bands);
  for (float& v : s.values) v = uniform_pm(rng, 2.0f);
  return kws::normalize(s);
}

// ---------------------------------------------------------------------------
// Temp files

struct TempDir {
  std::filesystem::path path;

  TempDir() {
    static std::atomic<int> counter{0};
    path = std::filesystem::temp_directory_path() /
           ("kws_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter++));
    std::filesystem::create_directories(path);
  }

  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }

  std::string file(const std::string& name) const {
    return (path / name).string();
  }
};

inline void write_bytes(const std::string& path,
                        std::span<const uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            std::streamsize(bytes.size()));
}

}  // namespace testutil
