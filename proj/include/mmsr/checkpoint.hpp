#pragma once

// Parameter checkpoint: magic "MMSRCKPT", u32 version, config record
// (variant, n, m, channels, scale as little-endian u32), u32 tensor count,
// then named tensors: u32 name length + UTF-8 name, dtype byte (0 = f32),
// u32 rank, u32 dims, little-endian f32 data.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "mmsr/network.hpp"

namespace mmsr {

namespace detail {

inline void ckpt_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
}

class CkptReader {
 public:
  explicit CkptReader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}
  std::size_t offset() const { return pos_; }

  void read(void* dst, std::size_t count) {
    if (pos_ + count > bytes_.size()) throw FormatError("checkpoint truncated", pos_);
    std::memcpy(dst, bytes_.data() + pos_, count);
    pos_ += count;
  }

  std::uint32_t u32() {
    std::uint8_t b[4];
    read(b, 4);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  }

  std::uint8_t u8() {
    std::uint8_t b;
    read(&b, 1);
    return b;
  }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

constexpr std::uint32_t kCheckpointVersion = 1;

template <class S>
std::vector<std::uint8_t> encode_checkpoint(ModelParams<S>& params) {
  std::vector<std::uint8_t> out;
  const char magic[8] = {'M', 'M', 'S', 'R', 'C', 'K', 'P', 'T'};
  out.insert(out.end(), magic, magic + 8);
  detail::ckpt_u32(out, kCheckpointVersion);
  detail::ckpt_u32(out, static_cast<std::uint32_t>(params.config.variant));
  detail::ckpt_u32(out, static_cast<std::uint32_t>(params.config.n));
  detail::ckpt_u32(out, static_cast<std::uint32_t>(params.config.m));
  detail::ckpt_u32(out, static_cast<std::uint32_t>(params.config.channels));
  detail::ckpt_u32(out, static_cast<std::uint32_t>(params.config.scale));
  auto named = params.named_tensors();
  detail::ckpt_u32(out, static_cast<std::uint32_t>(named.size()));
  for (auto& [name, tensor] : named) {
    detail::ckpt_u32(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    out.push_back(0);  // dtype byte: f32
    detail::ckpt_u32(out, static_cast<std::uint32_t>(tensor.rank()));
    for (int d = 0; d < tensor.rank(); ++d)
      detail::ckpt_u32(out, static_cast<std::uint32_t>(tensor.dim(d)));
    for (int i = 0; i < tensor.numel(); ++i) {
      const float v = static_cast<float>(tensor.data()[i]);
      std::uint32_t bits;
      std::memcpy(&bits, &v, 4);
      detail::ckpt_u32(out, bits);
    }
  }
  return out;
}

template <class S>
void save_checkpoint(const std::string& path, ModelParams<S>& params) {
  const auto bytes = encode_checkpoint(params);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ArgumentError("cannot write '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ArgumentError("write failed for '" + path + "'");
}

template <class S>
ModelParams<S> decode_checkpoint(const std::vector<std::uint8_t>& bytes, Graph<S>* graph = nullptr) {
  detail::CkptReader r(bytes);
  char magic[8];
  r.read(magic, 8);
  if (std::memcmp(magic, "MMSRCKPT", 8) != 0) throw FormatError("bad checkpoint magic", 0);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version), r.offset() - 4);
  ModelConfig cfg;
  const std::uint32_t variant = r.u32();
  if (variant > 6) throw FormatError("invalid variant id " + std::to_string(variant), r.offset() - 4);
  cfg.variant = static_cast<Variant>(variant);
  cfg.n = static_cast<int>(r.u32());
  cfg.m = static_cast<int>(r.u32());
  cfg.channels = static_cast<int>(r.u32());
  cfg.scale = static_cast<int>(r.u32());
  try {
    validate(cfg);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("invalid checkpoint config: ") + e.what(), 12);
  }

  ModelParams<S> params;
  params.config = cfg;
  const std::uint32_t count = r.u32();
  auto inventory = layer_inventory(cfg);
  if (count != inventory.size() * 2)
    throw FormatError("checkpoint tensor count " + std::to_string(count) + " does not match config",
                      r.offset() - 4);

  std::size_t layer_idx = 0;
  params.for_each_layer([&](const std::string& layer_name, ConvLayer<S>& layer) {
    const auto& dims = inventory[layer_idx++].second;
    const int c_out = dims[0], c_in = dims[1], k = dims[2];
    auto read_tensor = [&](const std::string& expect_name, const Shape& shape) {
      const std::size_t name_off = r.offset();
      const std::uint32_t name_len = r.u32();
      if (name_len > 256) throw FormatError("tensor name too long", name_off);
      std::string name(name_len, '\0');
      r.read(name.data(), name_len);
      if (name != expect_name)
        throw FormatError("expected tensor '" + expect_name + "', found '" + name + "'", name_off);
      if (r.u8() != 0) throw FormatError("unsupported dtype byte", r.offset() - 1);
      const std::uint32_t rank = r.u32();
      if (rank != shape.size()) throw FormatError("rank mismatch for '" + name + "'", r.offset() - 4);
      for (std::size_t d = 0; d < shape.size(); ++d) {
        const std::uint32_t dim = r.u32();
        if (dim != static_cast<std::uint32_t>(shape[d]))
          throw FormatError("shape mismatch for '" + name + "'", r.offset() - 4);
      }
      Tensor<S> t = graph ? graph->parameter(shape) : Tensor<S>::zeros(shape);
      for (int i = 0; i < t.numel(); ++i) {
        const std::uint32_t bits = r.u32();
        float v;
        std::memcpy(&v, &bits, 4);
        t.data()[i] = static_cast<S>(v);
      }
      return t;
    };
    layer.weight = read_tensor(layer_name + ".weight", {c_out, c_in, k, k});
    layer.bias = read_tensor(layer_name + ".bias", {c_out});
  });
  return params;
}

template <class S>
ModelParams<S> load_checkpoint(const std::string& path, Graph<S>* graph = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArgumentError("cannot open '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode_checkpoint<S>(bytes, graph);
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what(), e.byte_offset());
  }
}

}  // namespace mmsr
