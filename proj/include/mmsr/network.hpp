#pragma once

// The SR network: source branch (1x1 convs), guide branch (3x3 convs),
// mutual modulation, fusion, prediction head. Variants model0..model6 swap
// the modulation stage for the ablation study; model3 is the full model.

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "mmsr/adam.hpp"
#include "mmsr/modulation.hpp"
#include "mmsr/ops.hpp"
#include "mmsr/rng.hpp"
#include "mmsr/tensor.hpp"

namespace mmsr {

enum class Variant { model0, model1, model2, model3, model4, model5, model6 };

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::model0: return "model0";
    case Variant::model1: return "model1";
    case Variant::model2: return "model2";
    case Variant::model3: return "model3";
    case Variant::model4: return "model4";
    case Variant::model5: return "model5";
    case Variant::model6: return "model6";
  }
  return "?";
}

inline Variant parse_variant(const std::string& name) {
  if (name == "mmsr" || name == "model3") return Variant::model3;
  for (int v = 0; v <= 6; ++v)
    if (name == std::string("model") + std::to_string(v)) return static_cast<Variant>(v);
  throw ConfigError("unknown variant '" + name + "' (model0..model6 or mmsr)");
}

struct ModelConfig {
  Variant variant = Variant::model3;
  int n = 11;         // source-to-guide window
  int m = 5;          // guide-to-source window
  int channels = 64;  // feature width
  int scale = 4;      // SR factor
};

inline void validate(const ModelConfig& cfg) {
  if (cfg.n < 1 || cfg.n % 2 == 0 || cfg.m < 1 || cfg.m % 2 == 0)
    throw ConfigError("model config: n and m must be odd and >= 1 (n=" + std::to_string(cfg.n) +
                      ", m=" + std::to_string(cfg.m) + ")");
  if (cfg.channels < 1) throw ConfigError("model config: channels must be >= 1");
  if (cfg.scale < 2) throw ConfigError("model config: scale must be >= 2");
}

template <class S>
struct ConvLayer {
  Tensor<S> weight;  // (Cout,Cin,k,k)
  Tensor<S> bias;    // (Cout)
};

template <class S>
struct ResBlockLayer {
  ConvLayer<S> conv1, conv2;
};

// Ordered collection of named conv layers; inventory is a pure function of
// the config. Enumeration order fixes initialization and checkpoint layout.
template <class S>
struct ModelParams {
  ModelConfig config;

  ConvLayer<S> src_conv1, src_conv2;
  ResBlockLayer<S> src_block1, src_block2;
  ConvLayer<S> guide_conv1, guide_conv2;
  ResBlockLayer<S> guide_block1, guide_block2;
  ConvLayer<S> filter_src, filter_guide;  // model4 only
  ConvLayer<S> fusion;
  ResBlockLayer<S> pred_block1, pred_block2, pred_block3;
  ConvLayer<S> pred_out;

  template <class Fn>
  void for_each_layer(Fn&& fn) {
    auto block = [&](const char* base, ResBlockLayer<S>& b) {
      fn(std::string(base) + ".conv1", b.conv1);
      fn(std::string(base) + ".conv2", b.conv2);
    };
    fn(std::string("source.conv1"), src_conv1);
    fn(std::string("source.conv2"), src_conv2);
    block("source.block1", src_block1);
    block("source.block2", src_block2);
    fn(std::string("guide.conv1"), guide_conv1);
    fn(std::string("guide.conv2"), guide_conv2);
    block("guide.block1", guide_block1);
    block("guide.block2", guide_block2);
    if (config.variant == Variant::model4) {
      fn(std::string("filter.source"), filter_src);
      fn(std::string("filter.guide"), filter_guide);
    }
    fn(std::string("fusion"), fusion);
    block("pred.block1", pred_block1);
    block("pred.block2", pred_block2);
    block("pred.block3", pred_block3);
    fn(std::string("pred.out"), pred_out);
  }

  std::vector<Tensor<S>> tensors() {
    std::vector<Tensor<S>> out;
    for_each_layer([&](const std::string&, ConvLayer<S>& c) {
      out.push_back(c.weight);
      out.push_back(c.bias);
    });
    return out;
  }

  std::vector<std::pair<std::string, Tensor<S>>> named_tensors() {
    std::vector<std::pair<std::string, Tensor<S>>> out;
    for_each_layer([&](const std::string& name, ConvLayer<S>& c) {
      out.emplace_back(name + ".weight", c.weight);
      out.emplace_back(name + ".bias", c.bias);
    });
    return out;
  }
};

// (Cout, Cin, k) for every layer in enumeration order; pure function of config.
inline std::vector<std::pair<std::string, std::array<int, 3>>> layer_inventory(
    const ModelConfig& cfg) {
  const int c = cfg.channels;
  std::vector<std::pair<std::string, std::array<int, 3>>> inv;
  auto block = [&](const std::string& base, int ch, int k) {
    inv.push_back({base + ".conv1", {ch, ch, k}});
    inv.push_back({base + ".conv2", {ch, ch, k}});
  };
  inv.push_back({"source.conv1", {c, 1, 1}});
  inv.push_back({"source.conv2", {c, c, 1}});
  block("source.block1", c, 1);
  block("source.block2", c, 1);
  inv.push_back({"guide.conv1", {c, 3, 3}});
  inv.push_back({"guide.conv2", {c, c, 3}});
  block("guide.block1", c, 3);
  block("guide.block2", c, 3);
  if (cfg.variant == Variant::model4) {
    inv.push_back({"filter.source", {c, c, cfg.n}});
    inv.push_back({"filter.guide", {c, c, cfg.m}});
  }
  const int fuse_k = cfg.variant == Variant::model5 ? cfg.n : 1;
  inv.push_back({"fusion", {c, 2 * c, fuse_k}});
  block("pred.block1", c, 1);
  block("pred.block2", c, 1);
  block("pred.block3", c, 1);
  inv.push_back({"pred.out", {1, c, 1}});
  return inv;
}

// Deterministic fan-in-scaled uniform init; same seed, same bits.
template <class S>
ModelParams<S> build(const ModelConfig& cfg, std::uint64_t seed, Graph<S>* graph = nullptr) {
  validate(cfg);
  ModelParams<S> params;
  params.config = cfg;
  Rng rng(derive_seed(seed, 0x6d6f64656cULL));
  auto inventory = layer_inventory(cfg);
  std::size_t idx = 0;
  params.for_each_layer([&](const std::string& name, ConvLayer<S>& layer) {
    const auto& [inv_name, dims] = inventory[idx++];
    (void)inv_name;
    const int c_out = dims[0], c_in = dims[1], k = dims[2];
    Shape wshape{c_out, c_in, k, k};
    layer.weight = graph ? graph->parameter(wshape) : Tensor<S>::zeros(wshape);
    layer.bias = graph ? graph->parameter({c_out}) : Tensor<S>::zeros({c_out});
    const double bound = 1.0 / std::sqrt(static_cast<double>(c_in) * k * k);
    for (int i = 0; i < layer.weight.numel(); ++i)
      layer.weight.data()[i] = static_cast<S>(rng.uniform(-bound, bound));
  });
  return params;
}

namespace detail {

template <class S>
void check_layer_finite(const char* layer, const Tensor<S>& t) {
  if (!t.all_finite()) throw NumericError(std::string("non-finite activation after layer ") + layer);
}

}  // namespace detail

// conv -> relu -> conv -> + input (no normalization, no residual scaling)
template <class S>
Tensor<S> residual_block(const Tensor<S>& x, ResBlockLayer<S>& block) {
  Tensor<S> y = conv2d(x, block.conv1.weight, block.conv1.bias);
  y = relu(y);
  y = conv2d(y, block.conv2.weight, block.conv2.bias);
  return add(y, x);
}

template <class S>
Tensor<S> fuse(const Tensor<S>& a, const Tensor<S>& b, ConvLayer<S>& fusion) {
  if (!a.same_shape(b))
    throw ArgumentError("fuse: shape mismatch " + shape_str(a.shape()) + " vs " +
                        shape_str(b.shape()));
  return conv2d(concat_channels(a, b), fusion.weight, fusion.bias);
}

// Full forward pass: (1,h,w) LR source + (3,h*scale,w*scale) guide -> (1,H,W) SR.
template <class S>
Tensor<S> forward(ModelParams<S>& params, const Tensor<S>& src_lr, const Tensor<S>& guide) {
  const ModelConfig& cfg = params.config;
  if (src_lr.rank() != 3 || src_lr.dim(0) != 1)
    throw ArgumentError("forward: source must be (1,h,w), got " + shape_str(src_lr.shape()));
  if (guide.rank() != 3 || guide.dim(0) != 3)
    throw ArgumentError("forward: guide must be (3,H,W), got " + shape_str(guide.shape()));
  if (guide.dim(1) != src_lr.dim(1) * cfg.scale || guide.dim(2) != src_lr.dim(2) * cfg.scale)
    throw ArgumentError("forward: guide " + shape_str(guide.shape()) + " is not source " +
                        shape_str(src_lr.shape()) + " x scale " + std::to_string(cfg.scale));

  auto branch = [](const Tensor<S>& in, const char* tag, ConvLayer<S>& c1, ConvLayer<S>& c2,
                   ResBlockLayer<S>& b1, ResBlockLayer<S>& b2) {
    Tensor<S> f = conv2d(in, c1.weight, c1.bias);
    f = relu(f);
    f = conv2d(f, c2.weight, c2.bias);
    f = residual_block(f, b1);
    f = residual_block(f, b2);
    detail::check_layer_finite(tag, f);
    return f;
  };

  Tensor<S> up = bilinear_upsample(src_lr, cfg.scale);
  Tensor<S> fs = branch(up, "source branch", params.src_conv1, params.src_conv2,
                        params.src_block1, params.src_block2);
  Tensor<S> fg = branch(guide, "guide branch", params.guide_conv1, params.guide_conv2,
                        params.guide_block1, params.guide_block2);

  FeatureMap<S> fs_map{fs, Domain::source};
  FeatureMap<S> fg_map{fg, Domain::guide};
  Tensor<S> fused;
  switch (cfg.variant) {
    case Variant::model0:
      fused = fuse(fs, fg, params.fusion);
      break;
    case Variant::model1:
      fused = fuse(fs, g2s_modulate(fg_map, fs_map, cfg.m).tensor, params.fusion);
      break;
    case Variant::model2:
      fused = fuse(s2g_modulate(fs_map, fg_map, cfg.n).tensor, fg, params.fusion);
      break;
    case Variant::model3:
      fused = fuse(s2g_modulate(fs_map, fg_map, cfg.n).tensor,
                   g2s_modulate(fg_map, fs_map, cfg.m).tensor, params.fusion);
      break;
    case Variant::model4:
      fused = fuse(conv2d(fs, params.filter_src.weight, params.filter_src.bias),
                   conv2d(fg, params.filter_guide.weight, params.filter_guide.bias),
                   params.fusion);
      break;
    case Variant::model5:
      fused = conv2d(concat_channels(fs, fg), params.fusion.weight, params.fusion.bias);
      break;
    case Variant::model6:
      fused = fuse(self_modulate(fs_map, cfg.n).tensor, self_modulate(fg_map, cfg.m).tensor,
                   params.fusion);
      break;
  }
  detail::check_layer_finite("fusion", fused);

  Tensor<S> p = residual_block(fused, params.pred_block1);
  p = residual_block(p, params.pred_block2);
  p = residual_block(p, params.pred_block3);
  p = conv2d(p, params.pred_out.weight, params.pred_out.bias);
  detail::check_layer_finite("prediction", p);
  return p;
}

}  // namespace mmsr
