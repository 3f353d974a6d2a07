#include <catch2/catch_amalgamated.hpp>
#include <random>
#include <thread>

#include "helpers.hpp"
#include "kws/frontend.hpp"
#include "kws/wav.hpp"

using namespace kws;

// ---------------------------------------------------------------------------
// shift_in

TEST_CASE("shift_in splices old tail and new block") {
  SampleWindow w;
  std::vector<float> ones(kHopSize, 1.0f);
  w.shift_in(ones);
  for (int i = 0; i < kHopSize; ++i) REQUIRE(w.samples[size_t(i)] == 0.0f);
  for (int i = kHopSize; i < kFftSize; ++i) {
    REQUIRE(w.samples[size_t(i)] == 1.0f);
  }
}

TEST_CASE("two consecutive shifts leave the blocks in order") {
  SampleWindow w;
  std::vector<float> a(kHopSize), b(kHopSize);
  for (int i = 0; i < kHopSize; ++i) {
    a[size_t(i)] = float(i);
    b[size_t(i)] = float(1000 + i);
  }
  w.shift_in(a);
  w.shift_in(b);
  for (int i = 0; i < kHopSize; ++i) {
    REQUIRE(w.samples[size_t(i)] == a[size_t(i)]);
    REQUIRE(w.samples[size_t(kHopSize + i)] == b[size_t(i)]);
  }
}

TEST_CASE("shift_in equals concatenation of tail and block") {
  std::mt19937 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    SampleWindow w;
    for (auto& v : w.samples) v = testutil::uniform_pm(rng);
    std::vector<float> block(kHopSize);
    for (auto& v : block) v = testutil::uniform_pm(rng);

    std::vector<float> expected(w.samples.begin() + kHopSize, w.samples.end());
    expected.insert(expected.end(), block.begin(), block.end());

    w.shift_in(block);
    for (int i = 0; i < kFftSize; ++i) {
      REQUIRE(w.samples[size_t(i)] == expected[size_t(i)]);
    }
  }
}

TEST_CASE("shift_in rejects wrong hop length") {
  SampleWindow w;
  std::vector<float> bad(100, 0.0f);
  REQUIRE_THROWS_AS(w.shift_in(bad), shape_error);
}

// ---------------------------------------------------------------------------
// Hann

TEST_CASE("Hann endpoints on an all-ones window") {
  SampleWindow w;
  w.samples.fill(1.0f);
  const auto out = apply_hann(w);
  REQUIRE(out[0] == 0.0f);
  REQUIRE(out[kFftSize / 2] == 1.0f);
}

TEST_CASE("Hann matches an independently tabulated coefficient product") {
  std::mt19937 rng(5);
  SampleWindow w;
  for (auto& v : w.samples) v = testutil::uniform_pm(rng);
  const auto out = apply_hann(w);
  for (int n = 0; n < kFftSize; ++n) {
    const float coeff = float(0.5 - 0.5 * std::cos(2.0 * M_PI * n / kFftSize));
    REQUIRE(out[size_t(n)] ==
            Catch::Approx(w.samples[size_t(n)] * coeff).margin(1e-7));
  }
}

// ---------------------------------------------------------------------------
// FFT

TEST_CASE("impulse has a flat magnitude spectrum") {
  std::array<float, kFftSize> frame{};
  frame[0] = 1.0f;
  const auto mags = fft_1024(frame);
  for (float m : mags) REQUIRE(m == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("bin-16 cosine concentrates in bin 16") {
  std::array<float, kFftSize> frame{};
  for (int n = 0; n < kFftSize; ++n) {
    frame[size_t(n)] = float(std::cos(2.0 * M_PI * 16.0 * n / kFftSize));
  }
  const auto mags = fft_1024(frame);
  REQUIRE(mags[16] == Catch::Approx(512.0).epsilon(1e-6));
  for (int k = 0; k < kNumFreqBins; ++k) {
    if (k != 16) REQUIRE(mags[size_t(k)] < 512.0 * 1e-6);
  }
}

TEST_CASE("FFT magnitudes match the naive DFT oracle") {
  std::mt19937 rng(42);
  for (int trial = 0; trial < 100; ++trial) {
    std::array<float, kFftSize> frame;
    for (auto& v : frame) v = testutil::uniform_pm(rng);
    const auto mags = fft_1024(frame);
    const auto ref = testutil::naive_dft(frame);
    double peak = 0.0;
    for (int k = 0; k < kNumFreqBins; ++k) {
      peak = std::max(peak, std::abs(ref[size_t(k)]));
    }
    double max_rel = 0.0;
    for (int k = 0; k < kNumFreqBins; ++k) {
      max_rel = std::max(
          max_rel, std::abs(double(mags[size_t(k)]) - std::abs(ref[size_t(k)])) /
                       peak);
    }
    REQUIRE(max_rel < 1e-5);
  }
}

TEST_CASE("Parseval holds over the full conjugate-symmetric spectrum") {
  std::mt19937 rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    std::array<float, kFftSize> frame;
    for (auto& v : frame) v = testutil::uniform_pm(rng);
    const auto spec = fft_spectrum(frame);
    double time_energy = 0.0;
    for (float v : frame) time_energy += double(v) * double(v);
    double freq_energy = 0.0;
    for (const auto& x : spec) freq_energy += std::norm(x);
    freq_energy /= double(kFftSize);
    REQUIRE(std::abs(time_energy - freq_energy) / time_energy < 1e-6);
  }
}

TEST_CASE("FFT is linear in its input") {
  std::mt19937 rng(13);
  std::array<float, kFftSize> x, y, z;
  for (auto& v : x) v = testutil::uniform_pm(rng);
  for (auto& v : y) v = testutil::uniform_pm(rng);
  const float a = 1.75f, b = -0.4f;
  for (int n = 0; n < kFftSize; ++n) {
    z[size_t(n)] = a * x[size_t(n)] + b * y[size_t(n)];
  }
  const auto fx = fft_spectrum(x);
  const auto fy = fft_spectrum(y);
  const auto fz = fft_spectrum(z);
  for (int k = 0; k < kFftSize; ++k) {
    const auto expect = double(a) * fx[size_t(k)] + double(b) * fy[size_t(k)];
    REQUIRE(std::abs(fz[size_t(k)] - expect) < 1e-6 * kFftSize);
  }
}

// ---------------------------------------------------------------------------
// Mel filterbank

TEST_CASE("filterbank geometry invariants") {
  const auto& fb = default_filterbank();
  double prev_center = -1.0;
  for (const auto& f : fb.filters) {
    REQUIRE(f.center_hz > prev_center);
    prev_center = f.center_hz;
    REQUIRE(!f.coeffs.empty());
    // coefficients live in [0, 1] and rise then fall
    float peak = 0.0f;
    size_t peak_at = 0;
    for (size_t i = 0; i < f.coeffs.size(); ++i) {
      REQUIRE(f.coeffs[i] >= 0.0f);
      REQUIRE(f.coeffs[i] <= 1.0f);
      if (f.coeffs[i] > peak) {
        peak = f.coeffs[i];
        peak_at = i;
      }
    }
    for (size_t i = 1; i <= peak_at; ++i) {
      REQUIRE(f.coeffs[i] >= f.coeffs[i - 1]);
    }
    for (size_t i = peak_at + 1; i < f.coeffs.size(); ++i) {
      REQUIRE(f.coeffs[i] <= f.coeffs[i - 1]);
    }
  }
}

TEST_CASE("all-zero magnitudes hit the log floor") {
  std::array<float, kNumFreqBins> mags{};
  const auto col = mel_log(mags, default_filterbank());
  for (float v : col) REQUIRE(v == Catch::Approx(std::log(1e-10)).margin(1e-6));
}

TEST_CASE("indicator at a filter's peak bin returns log of the peak coeff") {
  const auto& fb = default_filterbank();
  const auto& f = fb.filters[20];
  size_t peak_i = 0;
  for (size_t i = 0; i < f.coeffs.size(); ++i) {
    if (f.coeffs[i] > f.coeffs[peak_i]) peak_i = i;
  }
  std::array<float, kNumFreqBins> mags{};
  mags[size_t(f.start_bin) + peak_i] = 1.0f;
  const auto col = mel_log(mags, fb);
  REQUIRE(col[20] == Catch::Approx(std::log(f.coeffs[peak_i])).margin(1e-6));
}

TEST_CASE("mel_log equals a dense 40x513 matrix product") {
  const auto& fb = default_filterbank();
  // dense matrix oracle
  std::vector<double> dense(size_t(kNumMelBands) * kNumFreqBins, 0.0);
  for (int m = 0; m < kNumMelBands; ++m) {
    const auto& f = fb.filters[size_t(m)];
    for (size_t i = 0; i < f.coeffs.size(); ++i) {
      dense[size_t(m) * kNumFreqBins + f.start_bin + i] = double(f.coeffs[i]);
    }
  }
  std::mt19937 rng(3);
  std::array<float, kNumFreqBins> mags;
  for (auto& v : mags) v = std::fabs(testutil::uniform_pm(rng)) * 10.0f;
  const auto col = mel_log(mags, fb);
  for (int m = 0; m < kNumMelBands; ++m) {
    double acc = 0.0;
    for (int k = 0; k < kNumFreqBins; ++k) {
      acc += dense[size_t(m) * kNumFreqBins + k] * double(mags[size_t(k)]);
    }
    const double expect = std::log(std::max(acc, 1e-10));
    REQUIRE(col[size_t(m)] == Catch::Approx(expect).margin(1e-6));
  }
}

// ---------------------------------------------------------------------------
// Ring + normalization

TEST_CASE("ring keeps the latest 30 columns in order") {
  SpectrogramRing ring;
  for (int i = 1; i <= 35; ++i) {
    MelColumn col;
    col.fill(float(i));
    ring.push(col);
  }
  const auto spec = ring.snapshot();
  for (int t = 0; t < kNumColumns; ++t) {
    REQUIRE(spec.at(t, 0) == float(6 + t));
    REQUIRE(spec.at(t, kNumMelBands - 1) == float(6 + t));
  }
}

TEST_CASE("snapshot of a non-full ring throws") {
  SpectrogramRing ring;
  MelColumn col{};
  for (int i = 0; i < kNumColumns - 1; ++i) ring.push(col);
  REQUIRE_THROWS_AS(ring.snapshot(), shape_error);
  REQUIRE_FALSE(ring.full());
  ring.push(col);
  REQUIRE(ring.full());
  REQUIRE_NOTHROW(ring.snapshot());
}

TEST_CASE("constant spectrogram normalizes to all zeros") {
  Spectrogram s(kNumColumns, kNumMelBands);
  for (float& v : s.values) v = 5.0f;
  const auto out = normalize(s);
  for (float v : out.values) REQUIRE(v == 0.0f);
}

TEST_CASE("normalization is idempotent in its statistics") {
  std::mt19937 rng(9);
  Spectrogram s(kNumColumns, kNumMelBands);
  for (float& v : s.values) v = testutil::uniform_pm(rng, 3.0f);
  const auto once = normalize(s);
  double mean = 0.0;
  for (float v : once.values) mean += v;
  mean /= double(once.values.size());
  double var = 0.0;
  for (float v : once.values) var += (v - mean) * (v - mean);
  const double stddev = std::sqrt(var / double(once.values.size()));
  REQUIRE(std::abs(mean) < 1e-6);
  REQUIRE(std::abs(stddev - 1.0) < 1e-6);
}

TEST_CASE("normalize matches a two-pass oracle") {
  std::mt19937 rng(21);
  Spectrogram s(kNumColumns, kNumMelBands);
  for (float& v : s.values) v = testutil::uniform_pm(rng, 8.0f);
  double mean = 0.0;
  for (float v : s.values) mean += v;
  mean /= double(s.values.size());
  double var = 0.0;
  for (float v : s.values) var += (v - mean) * (v - mean);
  const double stddev = std::sqrt(var / double(s.values.size()));
  const auto out = normalize(s);
  for (size_t i = 0; i < s.values.size(); ++i) {
    REQUIRE(out.values[i] ==
            Catch::Approx((s.values[i] - mean) / stddev).margin(1e-6));
  }
}

// ---------------------------------------------------------------------------
// Full chain

TEST_CASE("frontend chain is byte-deterministic on a WAV fixture") {
  const auto wav = testutil::make_wav(testutil::tone_samples(440.0, 1.5));
  const auto samples = parse_wav(wav);
  const auto a = spectrogram_from_samples(samples, default_filterbank());
  const auto b = spectrogram_from_samples(samples, default_filterbank());
  REQUIRE(a.values.size() == b.values.size());
  for (size_t i = 0; i < a.values.size(); ++i) {
    REQUIRE(std::memcmp(&a.values[i], &b.values[i], sizeof(float)) == 0);
  }
}

TEST_CASE("silence produces identical floor-valued columns") {
  std::vector<float> silence(16000 * 2, 0.0f);
  const auto spec = spectrogram_from_samples(silence, default_filterbank());
  for (int t = 0; t < kNumColumns; ++t) {
    for (int f = 0; f < kNumMelBands; ++f) {
      REQUIRE(spec.at(t, f) == spec.at(0, f));
      REQUIRE(spec.at(t, f) == Catch::Approx(std::log(1e-10)).margin(1e-5));
    }
  }
}

TEST_CASE("a 1 kHz tone lands in the mel band containing 1 kHz") {
  const auto wav = testutil::make_wav(testutil::tone_samples(1000.0, 1.5));
  const auto spec =
      spectrogram_from_samples(parse_wav(wav), default_filterbank());
  // find the band whose triangle contains 1 kHz with the largest coefficient
  const auto& fb = default_filterbank();
  int expected_band = 0;
  double best = -1.0;
  for (int m = 0; m < kNumMelBands; ++m) {
    const auto& f = fb.filters[size_t(m)];
    const double bin_hz = 16000.0 / kFftSize;
    const int bin_1khz = int(std::lround(1000.0 / bin_hz));
    if (bin_1khz >= f.start_bin &&
        bin_1khz < f.start_bin + int(f.coeffs.size())) {
      const double c = f.coeffs[size_t(bin_1khz - f.start_bin)];
      if (c > best) {
        best = c;
        expected_band = m;
      }
    }
  }
  // energy peak in the final column must be at (or next to) that band
  int peak_band = 0;
  for (int f = 1; f < kNumMelBands; ++f) {
    if (spec.at(29, f) > spec.at(29, peak_band)) peak_band = f;
  }
  REQUIRE(std::abs(peak_band - expected_band) <= 1);
}
