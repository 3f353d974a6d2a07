#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "kws/errors.hpp"

namespace kws {

// RIFF/WAVE ingestion. Accepted input: PCM16, 16 kHz, mono or stereo.
// Only channel 0 is returned, scaled to [-1, 1) by 1/32768.

inline constexpr int kSampleRate = 16000;

namespace detail {

inline uint32_t read_u32le(const uint8_t* p) {
  return uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 |
         uint32_t(p[3]) << 24;
}

inline uint16_t read_u16le(const uint8_t* p) {
  return uint16_t(p[0]) | uint16_t(p[1]) << 8;
}

}  // namespace detail

inline std::vector<float> parse_wav(const std::vector<uint8_t>& bytes) {
  using detail::read_u16le;
  using detail::read_u32le;

  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw wav_error(wav_error::reason::malformed, "not a RIFF/WAVE file");
  }

  bool have_fmt = false;
  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  const uint8_t* data = nullptr;
  size_t data_len = 0;

  size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const uint8_t* hdr = bytes.data() + pos;
    const uint32_t chunk_len = read_u32le(hdr + 4);
    const size_t body = pos + 8;
    if (body + chunk_len > bytes.size()) {
      throw wav_error(wav_error::reason::malformed, "truncated chunk");
    }
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (chunk_len < 16) {
        throw wav_error(wav_error::reason::malformed, "short fmt chunk");
      }
      format = read_u16le(hdr + 8);
      channels = read_u16le(hdr + 10);
      rate = read_u32le(hdr + 12);
      bits = read_u16le(hdr + 22);
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      data = hdr + 8;
      data_len = chunk_len;
    }
    pos = body + chunk_len + (chunk_len & 1);  // chunks are word-aligned
  }

  if (!have_fmt || data == nullptr) {
    throw wav_error(wav_error::reason::malformed, "missing fmt or data chunk");
  }
  if (format != 1) {
    throw wav_error(wav_error::reason::unsupported_format,
                    "only PCM (format 1) is supported, got format " +
                        std::to_string(format));
  }
  if (rate != kSampleRate) {
    throw wav_error(wav_error::reason::unsupported_rate,
                    "expected 16000 Hz, got " + std::to_string(rate));
  }
  if (bits != 16) {
    throw wav_error(wav_error::reason::unsupported_depth,
                    "expected 16-bit samples, got " + std::to_string(bits));
  }
  if (channels != 1 && channels != 2) {
    throw wav_error(wav_error::reason::unsupported_channels,
                    "expected 1 or 2 channels, got " + std::to_string(channels));
  }

  const size_t frame_bytes = size_t(channels) * 2;
  const size_t frames = data_len / frame_bytes;
  std::vector<float> out;
  out.reserve(frames);
  for (size_t i = 0; i < frames; ++i) {
    const uint8_t* s = data + i * frame_bytes;  // channel 0 leads each frame
    const auto v = int16_t(read_u16le(s));
    out.push_back(float(v) / 32768.0f);
  }
  return out;
}

inline std::vector<uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  return bytes;
}

inline std::vector<float> load_wav(const std::string& path) {
  return parse_wav(read_file_bytes(path));
}

}  // namespace kws
