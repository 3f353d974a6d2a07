#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <fstream>
#include <mutex>
#include <ostream>
#include <span>
#include <vector>

#include "kws/errors.hpp"
#include "kws/wav.hpp"

namespace kws {

// Audio frontend: 1024-sample window with 512-sample hop, periodic Hann,
// 1024-point FFT magnitudes, 40-band HTK mel filterbank, natural-log
// amplitudes, and a 30-column circular spectrogram.

inline constexpr int kFftSize = 1024;
inline constexpr int kHopSize = 512;
inline constexpr int kNumFreqBins = kFftSize / 2 + 1;  // 513
inline constexpr int kNumMelBands = 40;
inline constexpr int kNumColumns = 30;
inline constexpr float kLogFloor = 1e-10f;
inline constexpr float kStdFloor = 1e-6f;

using MelColumn = std::array<float, kNumMelBands>;

// ---------------------------------------------------------------------------
// Time-domain window

struct SampleWindow {
  std::array<float, kFftSize> samples{};

  /// Drops the oldest 512 samples and appends 512 new ones.
  void shift_in(std::span<const float> block) {
    if (block.size() != kHopSize) {
      throw shape_error("shift_in expects exactly 512 samples, got " +
                        std::to_string(block.size()));
    }
    std::copy(samples.begin() + kHopSize, samples.end(), samples.begin());
    std::copy(block.begin(), block.end(), samples.begin() + kHopSize);
  }
};

inline SampleWindow shift_in(const SampleWindow& window,
                             std::span<const float> block) {
  SampleWindow next = window;
  next.shift_in(block);
  return next;
}

// ---------------------------------------------------------------------------
// Hann window (periodic variant, denominator N)

inline const std::array<float, kFftSize>& hann_table() {
  static const std::array<float, kFftSize> table = [] {
    std::array<float, kFftSize> t{};
    for (int n = 0; n < kFftSize; ++n) {
      t[n] = float(0.5 - 0.5 * std::cos(2.0 * M_PI * n / kFftSize));
    }
    return t;
  }();
  return table;
}

inline std::array<float, kFftSize> apply_hann(const SampleWindow& window) {
  const auto& h = hann_table();
  std::array<float, kFftSize> out;
  for (int n = 0; n < kFftSize; ++n) out[n] = window.samples[n] * h[n];
  return out;
}

// ---------------------------------------------------------------------------
// FFT

/// In-place radix-2 DIT FFT. Size must be a power of two.
inline void fft_inplace(std::vector<std::complex<double>>& data) {
  const size_t n = data.size();
  if (n == 0 || (n & (n - 1)) != 0) {
    throw shape_error("fft size must be a power of two");
  }
  // bit-reversal permutation
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(data[i], data[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double angle = -2.0 * M_PI / double(len);
    const std::complex<double> wlen(std::cos(angle), std::sin(angle));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = data[i + k];
        const std::complex<double> v = data[i + k + len / 2] * w;
        data[i + k] = u + v;
        data[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

/// Full complex spectrum of a real frame.
inline std::vector<std::complex<double>> fft_spectrum(
    std::span<const float> frame) {
  if (frame.size() != kFftSize) {
    throw shape_error("fft_1024 expects 1024 samples");
  }
  std::vector<std::complex<double>> data(kFftSize);
  for (int n = 0; n < kFftSize; ++n) data[n] = {double(frame[n]), 0.0};
  fft_inplace(data);
  return data;
}

/// Magnitudes of bins 0..512.
inline std::array<float, kNumFreqBins> fft_1024(std::span<const float> frame) {
  const auto spec = fft_spectrum(frame);
  std::array<float, kNumFreqBins> mags;
  for (int k = 0; k < kNumFreqBins; ++k) mags[k] = float(std::abs(spec[k]));
  return mags;
}

// ---------------------------------------------------------------------------
// Mel filterbank

inline double hz_to_mel(double hz) {
  return 2595.0 * std::log10(1.0 + hz / 700.0);
}

inline double mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

struct MelFilterbank {
  struct Filter {
    int start_bin = 0;
    std::vector<float> coeffs;  // triangular, unit peak
    double center_hz = 0.0;
  };

  int sample_rate = kSampleRate;
  int fft_size = kFftSize;
  std::array<Filter, kNumMelBands> filters;

  /// 40 triangular filters on the HTK mel scale spanning [0, 8000] Hz.
  static MelFilterbank make_default() {
    MelFilterbank fb;
    const double mel_lo = hz_to_mel(0.0);
    const double mel_hi = hz_to_mel(double(kSampleRate) / 2.0);
    std::array<double, kNumMelBands + 2> edges_hz;
    for (int i = 0; i < kNumMelBands + 2; ++i) {
      const double mel = mel_lo + (mel_hi - mel_lo) * i / (kNumMelBands + 1);
      edges_hz[i] = mel_to_hz(mel);
    }
    const double bin_hz = double(kSampleRate) / kFftSize;
    for (int m = 0; m < kNumMelBands; ++m) {
      const double lo = edges_hz[m];
      const double c = edges_hz[m + 1];
      const double hi = edges_hz[m + 2];
      Filter f;
      f.center_hz = c;
      int first = -1;
      std::vector<float> coeffs;
      for (int k = 0; k < kNumFreqBins; ++k) {
        const double hz = k * bin_hz;
        double w = 0.0;
        if (hz > lo && hz < c) {
          w = (hz - lo) / (c - lo);
        } else if (hz >= c && hz < hi) {
          w = (hi - hz) / (hi - c);
        }
        if (w > 0.0) {
          if (first < 0) first = k;
          coeffs.push_back(float(w));
        } else if (first >= 0) {
          break;  // triangles are contiguous in k
        }
      }
      f.start_bin = first < 0 ? 0 : first;
      f.coeffs = std::move(coeffs);
      fb.filters[m] = std::move(f);
    }
    return fb;
  }
};

inline const MelFilterbank& default_filterbank() {
  static const MelFilterbank fb = MelFilterbank::make_default();
  return fb;
}

/// Filterbank energies in natural-log amplitude, floored at 1e-10.
inline MelColumn mel_log(std::span<const float> magnitudes,
                         const MelFilterbank& fb) {
  if (magnitudes.size() != kNumFreqBins) {
    throw shape_error("mel_log expects 513 magnitudes");
  }
  MelColumn out;
  for (int m = 0; m < kNumMelBands; ++m) {
    const auto& f = fb.filters[m];
    double acc = 0.0;
    for (size_t i = 0; i < f.coeffs.size(); ++i) {
      acc += double(f.coeffs[i]) * double(magnitudes[f.start_bin + int(i)]);
    }
    out[m] = std::log(std::max(float(acc), kLogFloor));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Spectrogram

/// Time-major spectrogram: `cols` columns of `bands` values each,
/// oldest column first.
struct Spectrogram {
  int cols = 0;
  int bands = 0;
  std::vector<float> values;

  Spectrogram() = default;
  Spectrogram(int c, int b) : cols(c), bands(b), values(size_t(c) * b, 0.0f) {}

  float& at(int t, int f) { return values[size_t(t) * bands + f]; }
  float at(int t, int f) const { return values[size_t(t) * bands + f]; }
};

/// Circular queue of the latest 30 mel columns. Single writer, single
/// reader: push() and snapshot() are mutually exclusive, and snapshot()
/// returns a private copy the writer can never touch.
class SpectrogramRing {
 public:
  void push(const MelColumn& col) {
    std::lock_guard<std::mutex> lock(mutex_);
    columns_[write_index_] = col;
    write_index_ = (write_index_ + 1) % kNumColumns;
    if (count_ < kNumColumns) ++count_;
  }

  bool full() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return count_ == kNumColumns;
  }

  int size() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return count_;
  }

  /// Copy of the 30 columns in oldest-to-newest order.
  Spectrogram snapshot() const {
    std::lock_guard<std::mutex> lock(mutex_);
    if (count_ != kNumColumns) {
      throw shape_error("spectrogram ring not full yet (" +
                        std::to_string(count_) + "/30 columns)");
    }
    Spectrogram out(kNumColumns, kNumMelBands);
    for (int t = 0; t < kNumColumns; ++t) {
      const int idx = (write_index_ + t) % kNumColumns;  // oldest first
      for (int f = 0; f < kNumMelBands; ++f) out.at(t, f) = columns_[idx][f];
    }
    return out;
  }

 private:
  mutable std::mutex mutex_;
  std::array<MelColumn, kNumColumns> columns_{};
  int write_index_ = 0;
  int count_ = 0;
};

/// Global z-score over all values; std floored at 1e-6.
inline Spectrogram normalize(const Spectrogram& in) {
  const size_t n = in.values.size();
  double sum = 0.0;
  for (float v : in.values) sum += v;
  const double mean = sum / double(n);
  double var = 0.0;
  for (float v : in.values) var += (v - mean) * (v - mean);
  const double stddev = std::sqrt(var / double(n));
  const double denom = std::max(stddev, double(kStdFloor));
  Spectrogram out(in.cols, in.bands);
  for (size_t i = 0; i < n; ++i) {
    out.values[i] = float((in.values[i] - mean) / denom);
  }
  return out;
}

inline Spectrogram snapshot_normalize(const SpectrogramRing& ring) {
  return normalize(ring.snapshot());
}

// ---------------------------------------------------------------------------
// Whole chain helpers

inline MelColumn column_from_window(const SampleWindow& window,
                                    const MelFilterbank& fb) {
  const auto frame = apply_hann(window);
  const auto mags = fft_1024(frame);
  return mel_log(mags, fb);
}

/// One mel column per 512-sample hop; any trailing partial hop is dropped.
inline std::vector<MelColumn> stream_columns(std::span<const float> samples,
                                             const MelFilterbank& fb) {
  std::vector<MelColumn> cols;
  SampleWindow window;
  const size_t hops = samples.size() / kHopSize;
  cols.reserve(hops);
  for (size_t h = 0; h < hops; ++h) {
    window.shift_in(samples.subspan(h * kHopSize, kHopSize));
    cols.push_back(column_from_window(window, fb));
  }
  return cols;
}

/// Raw (un-normalized) log-mel spectrogram of the final full window of a
/// sample stream. Needs at least 30 hops of audio.
inline Spectrogram spectrogram_from_samples(std::span<const float> samples,
                                            const MelFilterbank& fb) {
  const auto cols = stream_columns(samples, fb);
  if (cols.size() < kNumColumns) {
    throw shape_error("need at least 1 s of audio (30 columns), got " +
                      std::to_string(cols.size()));
  }
  Spectrogram out(kNumColumns, kNumMelBands);
  const size_t first = cols.size() - kNumColumns;
  for (int t = 0; t < kNumColumns; ++t) {
    for (int f = 0; f < kNumMelBands; ++f) {
      out.at(t, f) = cols[first + t][f];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dumps (CSV: 30 rows x 40 columns, row = time; binary: little-endian
// float32, time-major)

inline void write_spectrogram_csv(const Spectrogram& s, std::ostream& out) {
  out.precision(9);
  for (int t = 0; t < s.cols; ++t) {
    for (int f = 0; f < s.bands; ++f) {
      if (f) out << ',';
      out << s.at(t, f);
    }
    out << '\n';
  }
}

inline void write_spectrogram_f32(const Spectrogram& s, std::ostream& out) {
  out.write(reinterpret_cast<const char*>(s.values.data()),
            std::streamsize(s.values.size() * sizeof(float)));
}

inline Spectrogram read_spectrogram_f32(const std::string& path, int cols,
                                        int bands) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open " + path);
  Spectrogram s(cols, bands);
  in.read(reinterpret_cast<char*>(s.values.data()),
          std::streamsize(s.values.size() * sizeof(float)));
  if (in.gcount() != std::streamsize(s.values.size() * sizeof(float))) {
    throw format_error("short spectrogram file: " + path);
  }
  return s;
}

}  // namespace kws
