#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "kws/errors.hpp"
#include "kws/kernels.hpp"
#include "kws/model.hpp"

namespace kws {

// Magnitude-based pruning of the conv layer at four granularities. With a
// single input channel, kernel-level and filter-level sparsity both reduce
// to dropping output channels. Pruned weights become exact zeros; biases
// are never touched; there is no retraining. Ties rank by storage-order
// index, earlier index pruned first.

enum class Granularity { fine_grained, vector_level, kernel_level, filter_level };

inline std::string to_string(Granularity g) {
  switch (g) {
    case Granularity::fine_grained: return "fine";
    case Granularity::vector_level: return "vector";
    case Granularity::kernel_level: return "kernel";
    case Granularity::filter_level: return "filter";
  }
  return "?";
}

struct PruneReport {
  Granularity granularity = Granularity::fine_grained;
  double requested_fraction = 0.0;
  double achieved_fraction = 0.0;  // zero conv weights / total conv weights
  int64_t units_removed = 0;       // weights, rows, or channels
  int64_t zero_weights = 0;
  int64_t total_weights = 0;
};

namespace detail {

inline void check_fraction(double f) {
  if (!(f >= 0.0 && f <= 1.0)) {
    throw config_error("prune fraction must be in [0, 1], got " +
                       std::to_string(f));
  }
}

}  // namespace detail

struct FinePruneResult {
  WeightSet weights;
  std::vector<uint8_t> keep_mask;  // one flag per conv weight, 1 = kept
  PruneReport report;
};

inline FinePruneResult prune_fine(const WeightSet& w, double fraction) {
  detail::check_fraction(fraction);
  if (w.dtype != WeightDtype::f32) {
    throw shape_error("pruning operates on float32 weights");
  }
  check_shapes(w);
  FinePruneResult res;
  res.weights = w;
  const int64_t total = int64_t(w.conv_w.size());
  const int64_t n_prune = int64_t(std::floor(fraction * double(total)));

  std::vector<int64_t> order(static_cast<size_t>(total));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
    return std::fabs(w.conv_w[size_t(a)]) < std::fabs(w.conv_w[size_t(b)]);
  });

  res.keep_mask.assign(size_t(total), 1);
  for (int64_t i = 0; i < n_prune; ++i) {
    res.weights.conv_w[size_t(order[size_t(i)])] = 0.0f;
    res.keep_mask[size_t(order[size_t(i)])] = 0;
  }

  int64_t zeros = 0;
  for (float v : res.weights.conv_w) zeros += v == 0.0f;
  res.report = {Granularity::fine_grained, fraction,
                double(zeros) / double(total), n_prune, zeros, total};
  return res;
}

struct VectorPruneResult {
  WeightSet weights;
  VectorMask mask;
  PruneReport report;
};

/// Ranks all kernel rows by L1 norm and zeroes the lowest fraction.
inline VectorPruneResult prune_vector(const WeightSet& w, double fraction) {
  detail::check_fraction(fraction);
  if (w.dtype != WeightDtype::f32) {
    throw shape_error("pruning operates on float32 weights");
  }
  check_shapes(w);
  const ConvShape shape = w.config.conv_shape();
  const int64_t rows = int64_t(shape.out_channels) * shape.k_rows;
  const int64_t n_prune = int64_t(std::floor(fraction * double(rows)));

  std::vector<double> norms(size_t(rows), 0.0);
  for (int64_t row = 0; row < rows; ++row) {
    const float* base = w.conv_w.data() + size_t(row) * shape.k_cols;
    for (int kc = 0; kc < shape.k_cols; ++kc) {
      norms[size_t(row)] += std::fabs(double(base[kc]));
    }
  }
  std::vector<int64_t> order(static_cast<size_t>(rows));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
    return norms[size_t(a)] < norms[size_t(b)];
  });

  VectorPruneResult res;
  res.weights = w;
  res.mask = VectorMask::all_pass(shape);
  for (int64_t i = 0; i < n_prune; ++i) {
    const int64_t row = order[size_t(i)];
    res.mask.keep[size_t(row)] = 0;
    float* base = res.weights.conv_w.data() + size_t(row) * shape.k_cols;
    std::fill(base, base + shape.k_cols, 0.0f);
  }

  int64_t zeros = 0;
  for (float v : res.weights.conv_w) zeros += v == 0.0f;
  res.report = {Granularity::vector_level, fraction,
                double(zeros) / double(w.conv_w.size()), n_prune, zeros,
                int64_t(w.conv_w.size())};
  return res;
}

struct ChannelPruneResult {
  std::vector<int> keep;  // ascending channel indices
  PruneReport report;
};

/// Ranks channels by the L1 norm of their kernel and keeps the top
/// ceil((1 - fraction) * channels). The weight set itself is untouched;
/// the keep list drives conv_channel_reduced.
inline ChannelPruneResult prune_channels(const WeightSet& w, double fraction) {
  detail::check_fraction(fraction);
  if (w.dtype != WeightDtype::f32) {
    throw shape_error("pruning operates on float32 weights");
  }
  check_shapes(w);
  const ConvShape shape = w.config.conv_shape();
  const int channels = shape.out_channels;
  const int keep_n = int(std::ceil((1.0 - fraction) * double(channels)));

  std::vector<double> norms(size_t(channels), 0.0);
  for (int ch = 0; ch < channels; ++ch) {
    const float* base = w.conv_w.data() + size_t(ch) * shape.weights_per_channel();
    for (int64_t i = 0; i < shape.weights_per_channel(); ++i) {
      norms[size_t(ch)] += std::fabs(double(base[i]));
    }
  }
  std::vector<int> order(static_cast<size_t>(channels));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return norms[size_t(a)] < norms[size_t(b)]; });

  ChannelPruneResult res;
  res.keep.assign(order.end() - keep_n, order.end());
  std::sort(res.keep.begin(), res.keep.end());

  const int64_t removed = channels - keep_n;
  const int64_t zeroed = removed * shape.weights_per_channel();
  res.report = {Granularity::filter_level, fraction,
                double(zeroed) / double(w.conv_w.size()), removed, zeroed,
                int64_t(w.conv_w.size())};
  return res;
}

/// Counts exact-zero conv weights.
inline PruneReport sparsity_report(const WeightSet& w) {
  PruneReport r;
  r.granularity = Granularity::fine_grained;
  if (w.dtype == WeightDtype::f32) {
    r.total_weights = int64_t(w.conv_w.size());
    for (float v : w.conv_w) r.zero_weights += v == 0.0f;
  } else {
    r.total_weights = int64_t(w.conv_wq.size());
    for (int16_t v : w.conv_wq) r.zero_weights += v == 0;
  }
  r.achieved_fraction = double(r.zero_weights) / double(r.total_weights);
  r.requested_fraction = r.achieved_fraction;
  r.units_removed = r.zero_weights;
  return r;
}

// ---------------------------------------------------------------------------
// Mask files: "KWSM" | u8 granularity (0 = fine, 1 = vector) | 3 reserved
// bytes | u16 dims[4] (unused dims = 1) | bits LSB-first, 1 = kept.

namespace detail {

inline std::string pack_mask(std::span<const uint8_t> flags, uint8_t code,
                             const std::array<uint16_t, 4>& dims) {
  std::string out = "KWSM";
  out.push_back(char(code));
  out.append(3, '\0');
  for (uint16_t d : dims) {
    out.push_back(char(d & 0xff));
    out.push_back(char(d >> 8));
  }
  std::string bits((flags.size() + 7) / 8, '\0');
  for (size_t i = 0; i < flags.size(); ++i) {
    if (flags[i]) bits[i / 8] |= char(1 << (i % 8));
  }
  out += bits;
  return out;
}

struct UnpackedMask {
  uint8_t code = 0;
  std::array<uint16_t, 4> dims{};
  std::vector<uint8_t> flags;
};

inline UnpackedMask unpack_mask(std::span<const uint8_t> bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), "KWSM", 4) != 0) {
    throw format_error("not a KWSM mask file");
  }
  UnpackedMask m;
  m.code = bytes[4];
  size_t count = 1;
  for (int i = 0; i < 4; ++i) {
    m.dims[size_t(i)] = uint16_t(bytes[8 + 2 * i]) |
                        uint16_t(uint16_t(bytes[9 + 2 * i]) << 8);
    count *= m.dims[size_t(i)];
  }
  if (bytes.size() < 16 + (count + 7) / 8) {
    throw format_error("truncated KWSM mask file");
  }
  m.flags.resize(count);
  for (size_t i = 0; i < count; ++i) {
    m.flags[i] = (bytes[16 + i / 8] >> (i % 8)) & 1;
  }
  return m;
}

}  // namespace detail

inline void save_vector_mask(const VectorMask& m, const std::string& path) {
  const std::array<uint16_t, 4> dims = {uint16_t(m.out_channels),
                                        uint16_t(m.in_channels),
                                        uint16_t(m.k_rows), 1};
  const std::string bytes = detail::pack_mask(m.keep, 1, dims);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot write " + path);
  out.write(bytes.data(), std::streamsize(bytes.size()));
}

inline VectorMask load_vector_mask(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  const auto m = detail::unpack_mask(bytes);
  if (m.code != 1) throw format_error("mask file is not vector-level");
  VectorMask out;
  out.out_channels = m.dims[0];
  out.in_channels = m.dims[1];
  out.k_rows = m.dims[2];
  out.keep = m.flags;
  return out;
}

inline void save_fine_mask(std::span<const uint8_t> keep_mask,
                           const ConvShape& shape, const std::string& path) {
  const std::array<uint16_t, 4> dims = {
      uint16_t(shape.out_channels), uint16_t(shape.in_channels),
      uint16_t(shape.k_rows), uint16_t(shape.k_cols)};
  const std::string bytes = detail::pack_mask(keep_mask, 0, dims);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot write " + path);
  out.write(bytes.data(), std::streamsize(bytes.size()));
}

inline std::vector<uint8_t> load_fine_mask(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  const auto m = detail::unpack_mask(bytes);
  if (m.code != 0) throw format_error("mask file is not fine-grained");
  return m.flags;
}

inline void save_keep_list(std::span<const int> keep, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write " + path);
  for (size_t i = 0; i < keep.size(); ++i) {
    if (i) out << ',';
    out << keep[i];
  }
  out << '\n';
}

inline std::vector<int> load_keep_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open " + path);
  std::vector<int> keep;
  std::string token;
  while (std::getline(in, token, ',')) {
    if (token.empty() || token == "\n") continue;
    keep.push_back(std::stoi(token));
  }
  return keep;
}

}  // namespace kws
