#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "kws/errors.hpp"
#include "kws/model.hpp"

namespace kws {

// "KWSW" weight container, little-endian:
//   magic "KWSW" | u16 version = 1 | u8 dtype (0 = float32, 1 = int16)
//   then tensors until EOF, each:
//     u8 name_len | name bytes | u8 rank | u32 dims[rank]
//     | i8 exponent (int16 files only) | payload in storage order
// Tensor order: conv.weight, conv.bias, fc<l>.weight, fc<l>.bias, ...
// int16 files end with "act_exponents", a rank-1 int16 tensor holding the
// static activation exponents (model input, conv output, each FC output).

namespace detail {

inline void put_u16(std::string& out, uint16_t v) {
  out.push_back(char(v & 0xff));
  out.push_back(char(v >> 8));
}

inline void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

template <typename T>
void put_payload(std::string& out, std::span<const T> values) {
  static_assert(std::endian::native == std::endian::little);
  const char* p = reinterpret_cast<const char*>(values.data());
  out.append(p, values.size() * sizeof(T));
}

struct Reader {
  const uint8_t* p;
  const uint8_t* end;

  bool eof() const { return p >= end; }

  void need(size_t n, const char* what) {
    if (size_t(end - p) < n) {
      throw format_error(std::string("weight file truncated in ") + what);
    }
  }

  uint8_t u8(const char* what) {
    need(1, what);
    return *p++;
  }

  uint16_t u16(const char* what) {
    need(2, what);
    uint16_t v = uint16_t(p[0]) | uint16_t(p[1]) << 8;
    p += 2;
    return v;
  }

  uint32_t u32(const char* what) {
    need(4, what);
    uint32_t v = uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 |
                 uint32_t(p[3]) << 24;
    p += 4;
    return v;
  }

  std::string bytes(size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(p), n);
    p += n;
    return s;
  }
};

struct RawTensor {
  std::string name;
  std::vector<uint32_t> dims;
  int8_t exponent = 0;
  std::string payload;

  size_t element_count() const {
    size_t n = 1;
    for (uint32_t d : dims) n *= d;
    return n;
  }

  template <typename T>
  std::vector<T> as() const {
    if (payload.size() != element_count() * sizeof(T)) {
      throw format_error("tensor " + name + " payload size mismatch");
    }
    std::vector<T> out(element_count());
    std::memcpy(out.data(), payload.data(), payload.size());
    return out;
  }
};

inline void append_tensor(std::string& out, bool with_exponent,
                          const std::string& name,
                          std::span<const uint32_t> dims, int8_t exponent,
                          const char* payload, size_t payload_bytes) {
  if (name.size() > 255) throw config_error("tensor name too long");
  out.push_back(char(uint8_t(name.size())));
  out.append(name);
  out.push_back(char(uint8_t(dims.size())));
  for (uint32_t d : dims) put_u32(out, d);
  if (with_exponent) out.push_back(char(exponent));
  out.append(payload, payload_bytes);
}

}  // namespace detail

inline std::string serialize_weights(const WeightSet& w) {
  check_shapes(w);
  const ModelConfig& cfg = w.config;
  std::string out = "KWSW";
  detail::put_u16(out, 1);
  const bool i16 = w.dtype == WeightDtype::i16;
  out.push_back(i16 ? char(1) : char(0));

  auto add_f32 = [&](const std::string& name, std::span<const uint32_t> dims,
                     std::span<const float> v) {
    detail::append_tensor(out, false, name, dims, 0,
                          reinterpret_cast<const char*>(v.data()),
                          v.size() * sizeof(float));
  };
  auto add_i16 = [&](const std::string& name, std::span<const uint32_t> dims,
                     int8_t exp, std::span<const int16_t> v) {
    detail::append_tensor(out, true, name, dims, exp,
                          reinterpret_cast<const char*>(v.data()),
                          v.size() * sizeof(int16_t));
  };

  const std::vector<uint32_t> conv_w_dims = {
      uint32_t(cfg.conv_out_channels), 1, uint32_t(cfg.kernel_rows),
      uint32_t(cfg.kernel_cols)};
  const std::vector<uint32_t> conv_b_dims = {uint32_t(cfg.conv_out_channels)};

  if (!i16) {
    add_f32("conv.weight", conv_w_dims, w.conv_w);
    add_f32("conv.bias", conv_b_dims, w.conv_b);
    for (int l = 0; l < cfg.num_fc_layers(); ++l) {
      const std::vector<uint32_t> wd = {uint32_t(cfg.fc_out_dim(l)),
                                        uint32_t(cfg.fc_in_dim(l))};
      const std::vector<uint32_t> bd = {uint32_t(cfg.fc_out_dim(l))};
      add_f32("fc" + std::to_string(l) + ".weight", wd, w.fc[l].w);
      add_f32("fc" + std::to_string(l) + ".bias", bd, w.fc[l].b);
    }
  } else {
    add_i16("conv.weight", conv_w_dims, int8_t(w.conv_w_exp.exponent),
            w.conv_wq);
    add_i16("conv.bias", conv_b_dims, int8_t(w.conv_b_exp.exponent), w.conv_bq);
    for (int l = 0; l < cfg.num_fc_layers(); ++l) {
      const std::vector<uint32_t> wd = {uint32_t(cfg.fc_out_dim(l)),
                                        uint32_t(cfg.fc_in_dim(l))};
      const std::vector<uint32_t> bd = {uint32_t(cfg.fc_out_dim(l))};
      add_i16("fc" + std::to_string(l) + ".weight", wd,
              int8_t(w.fcq[l].w_exp.exponent), w.fcq[l].w);
      add_i16("fc" + std::to_string(l) + ".bias", bd,
              int8_t(w.fcq[l].b_exp.exponent), w.fcq[l].b);
    }
    std::vector<int16_t> exps(w.act_exps.begin(), w.act_exps.end());
    const std::vector<uint32_t> ed = {uint32_t(exps.size())};
    add_i16("act_exponents", ed, 0, exps);
  }
  return out;
}

/// Payload bytes of weight/bias tensors only (excludes headers and the
/// activation-exponent metadata tensor).
inline size_t weight_payload_bytes(const WeightSet& w) {
  const ParamCounts p = param_count(w.config);
  return size_t(p.total) * (w.dtype == WeightDtype::f32 ? 4 : 2);
}

inline void rescale_biases_to_acc(WeightSet& w);

inline WeightSet deserialize_weights(std::span<const uint8_t> bytes,
                                     const ModelConfig& cfg = ModelConfig{}) {
  detail::Reader r{bytes.data(), bytes.data() + bytes.size()};
  if (bytes.size() < 7 || r.bytes(4, "magic") != "KWSW") {
    throw format_error("not a KWSW weight file");
  }
  const uint16_t version = r.u16("version");
  if (version != 1) {
    throw format_error("unsupported KWSW version " + std::to_string(version));
  }
  const uint8_t dtype = r.u8("dtype");
  if (dtype > 1) {
    throw format_error("unsupported dtype code " + std::to_string(dtype));
  }
  const bool i16 = dtype == 1;

  std::vector<detail::RawTensor> tensors;
  while (!r.eof()) {
    detail::RawTensor t;
    const uint8_t name_len = r.u8("name length");
    t.name = r.bytes(name_len, "name");
    const uint8_t rank = r.u8("rank");
    for (int i = 0; i < rank; ++i) t.dims.push_back(r.u32("dims"));
    if (i16) t.exponent = int8_t(r.u8("exponent"));
    const size_t elem_bytes = i16 ? 2 : 4;
    t.payload = r.bytes(t.element_count() * elem_bytes, "payload");
    tensors.push_back(std::move(t));
  }

  auto find = [&](const std::string& name) -> const detail::RawTensor& {
    for (const auto& t : tensors) {
      if (t.name == name) return t;
    }
    throw format_error("weight file is missing tensor " + name);
  };

  WeightSet w;
  w.config = cfg;
  w.dtype = i16 ? WeightDtype::i16 : WeightDtype::f32;

  const auto& cw = find("conv.weight");
  if (cw.dims.size() != 4 || cw.dims[0] != uint32_t(cfg.conv_out_channels) ||
      cw.dims[1] != 1 || cw.dims[2] != uint32_t(cfg.kernel_rows) ||
      cw.dims[3] != uint32_t(cfg.kernel_cols)) {
    throw shape_error("conv.weight dims do not match the model config");
  }
  const auto& cb = find("conv.bias");
  if (cb.dims.size() != 1 || cb.dims[0] != uint32_t(cfg.conv_out_channels)) {
    throw shape_error("conv.bias dims do not match the model config");
  }

  if (!i16) {
    w.conv_w = cw.as<float>();
    w.conv_b = cb.as<float>();
    w.fc.resize(cfg.num_fc_layers());
  } else {
    w.conv_wq = cw.as<int16_t>();
    w.conv_w_exp = QParams{cw.exponent};
    w.conv_bq = cb.as<int16_t>();
    w.conv_b_exp = QParams{cb.exponent};
    w.fcq.resize(cfg.num_fc_layers());
  }

  for (int l = 0; l < cfg.num_fc_layers(); ++l) {
    const auto& fw = find("fc" + std::to_string(l) + ".weight");
    const auto& fb = find("fc" + std::to_string(l) + ".bias");
    if (fw.dims.size() != 2 || fw.dims[0] != uint32_t(cfg.fc_out_dim(l)) ||
        fw.dims[1] != uint32_t(cfg.fc_in_dim(l)) || fb.dims.size() != 1 ||
        fb.dims[0] != uint32_t(cfg.fc_out_dim(l))) {
      throw shape_error("fc" + std::to_string(l) +
                        " dims do not match the model config");
    }
    if (!i16) {
      w.fc[l].w = fw.as<float>();
      w.fc[l].b = fb.as<float>();
    } else {
      w.fcq[l].w = fw.as<int16_t>();
      w.fcq[l].w_exp = QParams{fw.exponent};
      w.fcq[l].b = fb.as<int16_t>();
      w.fcq[l].b_exp = QParams{fb.exponent};
    }
  }

  if (i16) {
    const auto& ae = find("act_exponents");
    const auto vals = ae.as<int16_t>();
    if (int(vals.size()) != cfg.num_fc_layers() + 2) {
      throw shape_error("act_exponents has the wrong length");
    }
    w.act_exps.assign(vals.begin(), vals.end());
    rescale_biases_to_acc(w);
  }

  check_shapes(w);
  return w;
}

/// Converts serialized int16 biases (own scale) to the int32 accumulator
/// scale (weight exponent + input exponent) used during inference.
inline void rescale_biases_to_acc(WeightSet& w) {
  auto rescale = [](std::span<const int16_t> b, int b_exp, int acc_exp) {
    std::vector<int32_t> out(b.size());
    const int shift = b_exp - acc_exp;
    for (size_t i = 0; i < b.size(); ++i) {
      int64_t v = int64_t(b[i]);
      if (shift >= 0) {
        v <<= shift;
      } else {
        const int s = -shift;  // round half up when dropping bits
        v = (v + (int64_t(1) << (s - 1))) >> s;
      }
      if (v > INT32_MAX) v = INT32_MAX;
      if (v < INT32_MIN) v = INT32_MIN;
      out[i] = int32_t(v);
    }
    return out;
  };
  w.conv_b32 = rescale(w.conv_bq, w.conv_b_exp.exponent,
                       w.conv_w_exp.exponent + w.act_exps[0]);
  w.fc_b32.resize(w.fcq.size());
  int in_exp = w.act_exps[1];
  for (size_t l = 0; l < w.fcq.size(); ++l) {
    w.fc_b32[l] =
        rescale(w.fcq[l].b, w.fcq[l].b_exp.exponent,
                w.fcq[l].w_exp.exponent + in_exp);
    in_exp = w.act_exps[2 + l];
  }
}

inline void save_weights(const WeightSet& w, const std::string& path) {
  const std::string bytes = serialize_weights(w);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot write " + path);
  out.write(bytes.data(), std::streamsize(bytes.size()));
  if (!out) throw io_error("short write to " + path);
}

inline WeightSet load_weights(const std::string& path,
                              const ModelConfig& cfg = ModelConfig{}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  return deserialize_weights(bytes, cfg);
}

// ---------------------------------------------------------------------------
// Deterministic pseudo-random weights for benchmarking without training.

namespace detail {

/// Uniform in [-0.5, 0.5), reproducible across platforms (raw mt19937
/// draws; distribution classes are implementation-defined).
inline float uniform_half(std::mt19937& rng) {
  return float(double(rng()) * (1.0 / 4294967296.0) - 0.5);
}

}  // namespace detail

inline WeightSet gen_weights(uint32_t seed,
                             const ModelConfig& cfg = ModelConfig{}) {
  WeightSet w = WeightSet::zeros(cfg);
  std::mt19937 rng(seed);
  for (float& v : w.conv_w) v = detail::uniform_half(rng);
  for (float& v : w.conv_b) v = detail::uniform_half(rng);
  for (auto& layer : w.fc) {
    for (float& v : layer.w) v = detail::uniform_half(rng);
    for (float& v : layer.b) v = detail::uniform_half(rng);
  }
  return w;
}

}  // namespace kws
