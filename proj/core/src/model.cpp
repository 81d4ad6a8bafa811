/*
 * Copyright 2026 The ICC Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "icc/model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <unordered_map>

namespace icc {

void ModelConfig::validate() const {
  if (input_channels == 0) throw ConfigError("input channels must be positive");
  if (!(width_multiplier > 0)) {
    throw ConfigError("width multiplier must be positive");
  }
  if (!use_contextual_module && !use_inception_blocks) {
    throw ConfigError(
        "both fusion paths disabled: the decoder would have no input");
  }
  if (use_contextual_module) {
    if (contextual_scales.empty()) {
      throw ConfigError("contextual module needs at least one scale");
    }
    for (std::size_t i = 0; i < contextual_scales.size(); ++i) {
      if (contextual_scales[i] < 1) {
        throw ConfigError("contextual scales must be at least 1");
      }
      if (i > 0 && contextual_scales[i] <= contextual_scales[i - 1]) {
        throw ConfigError("contextual scales must be strictly increasing");
      }
    }
  }
  if (decoder_channels.empty()) {
    throw ConfigError("decoder needs at least one layer");
  }
  for (std::size_t c : decoder_channels) {
    if (c == 0) throw ConfigError("decoder channel counts must be positive");
  }
}

std::size_t ModelConfig::width(std::size_t channels) const {
  const double scaled = std::round(static_cast<double>(channels) * width_multiplier);
  return std::max<std::size_t>(1, static_cast<std::size_t>(scaled));
}

const char* layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::kInput: return "input";
    case LayerKind::kPadToMultiple: return "pad_to_multiple";
    case LayerKind::kConv: return "conv";
    case LayerKind::kBatchNorm: return "batchnorm";
    case LayerKind::kRelu: return "relu";
    case LayerKind::kSigmoid: return "sigmoid";
    case LayerKind::kMaxPool: return "maxpool";
    case LayerKind::kAvgPool: return "avgpool";
    case LayerKind::kAdaptiveAvgPool: return "adaptive_avgpool";
    case LayerKind::kResizeLike: return "resize_like";
    case LayerKind::kUpsample: return "upsample";
    case LayerKind::kConcat: return "concat";
    case LayerKind::kChannelSum: return "channel_sum";
    case LayerKind::kAdd: return "add";
    case LayerKind::kSub: return "sub";
    case LayerKind::kMul: return "mul";
    case LayerKind::kDiv: return "div";
    case LayerKind::kAddScalar: return "add_scalar";
    case LayerKind::kCropToStride: return "crop_to_stride";
  }
  return "unknown";
}

std::optional<LayerKind> parse_layer_kind(const std::string& name) {
  for (int k = 0; k <= static_cast<int>(LayerKind::kCropToStride); ++k) {
    auto kind = static_cast<LayerKind>(k);
    if (name == layer_kind_name(kind)) return kind;
  }
  return std::nullopt;
}

const LayerSpec* GraphDescription::find(const std::string& name) const {
  for (const LayerSpec& l : layers) {
    if (l.name == name) return &l;
  }
  return nullptr;
}

std::vector<std::string> GraphDescription::frontend_blocks() const {
  std::vector<std::string> blocks;
  for (const LayerSpec& l : layers) {
    if (l.stage != "frontend") continue;
    if (std::find(blocks.begin(), blocks.end(), l.block) == blocks.end()) {
      blocks.push_back(l.block);
    }
  }
  return blocks;
}

namespace {

class Builder {
 public:
  explicit Builder(const ModelConfig& config) : cfg_(config) {}

  GraphDescription& graph() { return g_; }

  std::string add(LayerSpec l) {
    if (l.block.empty()) l.block = block_;
    if (l.stage.empty()) l.stage = stage_;
    g_.layers.push_back(l);
    return g_.layers.back().name;
  }

  void enter(std::string block, std::string stage) {
    block_ = std::move(block);
    stage_ = std::move(stage);
  }

  std::string conv(const std::string& name, const std::string& in,
                   std::size_t cin, std::size_t cout, std::size_t kh,
                   std::size_t kw, std::size_t stride, std::size_t ph,
                   std::size_t pw, bool bias) {
    LayerSpec l;
    l.name = name;
    l.kind = LayerKind::kConv;
    l.inputs = {in};
    l.in_channels = cin;
    l.out_channels = cout;
    l.kernel_h = kh;
    l.kernel_w = kw;
    l.stride_h = l.stride_w = stride;
    l.pad_h = ph;
    l.pad_w = pw;
    l.bias = bias;
    return add(l);
  }

  /// conv (no bias) -> batchnorm -> relu, the reference Inception unit.
  std::string basic_conv(const std::string& name, const std::string& in,
                         std::size_t cin, std::size_t cout, std::size_t kh,
                         std::size_t kw, std::size_t stride = 1) {
    const std::string c =
        conv(name + ".conv", in, cin, cout, kh, kw, stride, (kh - 1) / 2,
             (kw - 1) / 2, false);
    LayerSpec bn;
    bn.name = name + ".bn";
    bn.kind = LayerKind::kBatchNorm;
    bn.inputs = {c};
    bn.in_channels = bn.out_channels = cout;
    bn.eps = cfg_.norm_eps;
    bn.momentum = cfg_.norm_momentum;
    add(bn);
    return unary(LayerKind::kRelu, name + ".relu", bn.name);
  }

  std::string unary(LayerKind kind, const std::string& name,
                    const std::string& in) {
    LayerSpec l;
    l.name = name;
    l.kind = kind;
    l.inputs = {in};
    return add(l);
  }

  std::string nary(LayerKind kind, const std::string& name,
                   std::vector<std::string> ins) {
    LayerSpec l;
    l.name = name;
    l.kind = kind;
    l.inputs = std::move(ins);
    return add(l);
  }

  std::string pool(LayerKind kind, const std::string& name,
                   const std::string& in, std::size_t window,
                   std::size_t stride, std::size_t pad) {
    LayerSpec l;
    l.name = name;
    l.kind = kind;
    l.inputs = {in};
    l.kernel_h = l.kernel_w = window;
    l.stride_h = l.stride_w = stride;
    l.pad_h = l.pad_w = pad;
    return add(l);
  }

  std::size_t w(std::size_t c) const { return cfg_.width(c); }

 private:
  const ModelConfig& cfg_;
  GraphDescription g_;
  std::string block_, stage_;
};

struct Tapped {
  std::string layer;
  std::size_t channels;
};

Tapped inception_a(Builder& b, const std::string& name, const Tapped& in,
                   std::size_t pool_features) {
  b.enter(name, "frontend");
  const std::size_t c = in.channels;
  auto b1 = b.basic_conv(name + ".branch1x1", in.layer, c, b.w(64), 1, 1);
  auto b5 = b.basic_conv(name + ".branch5x5_1", in.layer, c, b.w(48), 1, 1);
  b5 = b.basic_conv(name + ".branch5x5_2", b5, b.w(48), b.w(64), 5, 5);
  auto b3 = b.basic_conv(name + ".branch3x3dbl_1", in.layer, c, b.w(64), 1, 1);
  b3 = b.basic_conv(name + ".branch3x3dbl_2", b3, b.w(64), b.w(96), 3, 3);
  b3 = b.basic_conv(name + ".branch3x3dbl_3", b3, b.w(96), b.w(96), 3, 3);
  auto bp = b.pool(LayerKind::kAvgPool, name + ".branch_pool.avg", in.layer, 3,
                   1, 1);
  bp = b.basic_conv(name + ".branch_pool", bp, c, b.w(pool_features), 1, 1);
  auto out = b.nary(LayerKind::kConcat, name + ".concat", {b1, b5, b3, bp});
  return {out, b.w(64) + b.w(64) + b.w(96) + b.w(pool_features)};
}

Tapped inception_b_reduction(Builder& b, const std::string& name,
                             const Tapped& in) {
  b.enter(name, "frontend");
  const std::size_t c = in.channels;
  auto b3 = b.basic_conv(name + ".branch3x3", in.layer, c, b.w(384), 3, 3, 2);
  auto bd = b.basic_conv(name + ".branch3x3dbl_1", in.layer, c, b.w(64), 1, 1);
  bd = b.basic_conv(name + ".branch3x3dbl_2", bd, b.w(64), b.w(96), 3, 3);
  bd = b.basic_conv(name + ".branch3x3dbl_3", bd, b.w(96), b.w(96), 3, 3, 2);
  auto bp = b.pool(LayerKind::kMaxPool, name + ".branch_pool", in.layer, 3, 2, 1);
  auto out = b.nary(LayerKind::kConcat, name + ".concat", {b3, bd, bp});
  return {out, b.w(384) + b.w(96) + c};
}

Tapped inception_c(Builder& b, const std::string& name, const Tapped& in,
                   std::size_t channels_7x7) {
  b.enter(name, "frontend");
  const std::size_t c = in.channels, c7 = b.w(channels_7x7), o = b.w(192);
  auto b1 = b.basic_conv(name + ".branch1x1", in.layer, c, o, 1, 1);
  auto b7 = b.basic_conv(name + ".branch7x7_1", in.layer, c, c7, 1, 1);
  b7 = b.basic_conv(name + ".branch7x7_2", b7, c7, c7, 1, 7);
  b7 = b.basic_conv(name + ".branch7x7_3", b7, c7, o, 7, 1);
  auto bd = b.basic_conv(name + ".branch7x7dbl_1", in.layer, c, c7, 1, 1);
  bd = b.basic_conv(name + ".branch7x7dbl_2", bd, c7, c7, 7, 1);
  bd = b.basic_conv(name + ".branch7x7dbl_3", bd, c7, c7, 1, 7);
  bd = b.basic_conv(name + ".branch7x7dbl_4", bd, c7, c7, 7, 1);
  bd = b.basic_conv(name + ".branch7x7dbl_5", bd, c7, o, 1, 7);
  auto bp = b.pool(LayerKind::kAvgPool, name + ".branch_pool.avg", in.layer, 3,
                   1, 1);
  bp = b.basic_conv(name + ".branch_pool", bp, c, o, 1, 1);
  auto out = b.nary(LayerKind::kConcat, name + ".concat", {b1, b7, bd, bp});
  return {out, 4 * o};
}

Tapped contextual_module(Builder& b, const ModelConfig& cfg,
                         const Tapped& base) {
  b.enter("context", "context");
  const std::size_t c = base.channels;
  std::vector<std::string> weighted, weights;
  for (std::size_t s : cfg.contextual_scales) {
    const std::string p = "context.s" + std::to_string(s);
    LayerSpec pool;
    pool.name = p + ".pool";
    pool.kind = LayerKind::kAdaptiveAvgPool;
    pool.inputs = {base.layer};
    pool.out_h = pool.out_w = s;
    b.add(pool);
    auto sc = b.conv(p + ".conv", pool.name, c, c, 1, 1, 1, 0, 0, true);
    LayerSpec up;
    up.name = p + ".upsample";
    up.kind = LayerKind::kResizeLike;
    up.inputs = {sc, base.layer};
    up.interp = ops::Interpolation::kBilinear;
    b.add(up);
    auto contrast = b.nary(LayerKind::kSub, p + ".contrast", {up.name, base.layer});
    auto wc = b.conv(p + ".weight_conv", contrast, c, c, 1, 1, 1, 0, 0, true);
    auto wt = b.unary(LayerKind::kSigmoid, p + ".weight", wc);
    weights.push_back(wt);
    weighted.push_back(b.nary(LayerKind::kMul, p + ".weighted", {wt, up.name}));
  }
  auto num = b.nary(LayerKind::kAdd, "context.numerator", weighted);
  auto wsum = b.nary(LayerKind::kAdd, "context.weight_sum", weights);
  LayerSpec den;
  den.name = "context.denominator";
  den.kind = LayerKind::kAddScalar;
  den.inputs = {wsum};
  den.scalar = cfg.context_weight_eps;
  b.add(den);
  auto fused = b.nary(LayerKind::kDiv, "context.fused", {num, den.name});
  auto out = b.nary(LayerKind::kConcat, "context.out", {base.layer, fused});
  return {out, 2 * c};
}

}  // namespace

GraphDescription build_icc(const ModelConfig& config) {
  config.validate();
  Builder b(config);
  b.enter("input", "io");
  LayerSpec input;
  input.name = "input";
  input.kind = LayerKind::kInput;
  input.in_channels = input.out_channels = config.input_channels;
  b.add(input);
  LayerSpec pad;
  pad.name = "input.pad";
  pad.kind = LayerKind::kPadToMultiple;
  pad.inputs = {"input"};
  pad.factor = 32;
  b.add(pad);

  // Seven stem layers; every convolution is "same"-padded so the two
  // max pools leave Feature1 at exactly stride 8.
  b.enter("stem.conv1a", "frontend");
  auto x = b.basic_conv("stem.conv1a", pad.name, config.input_channels,
                        b.w(32), 3, 3, 2);
  b.enter("stem.conv2a", "frontend");
  x = b.basic_conv("stem.conv2a", x, b.w(32), b.w(32), 3, 3);
  b.enter("stem.conv2b", "frontend");
  x = b.basic_conv("stem.conv2b", x, b.w(32), b.w(64), 3, 3);
  b.enter("stem.pool1", "frontend");
  x = b.pool(LayerKind::kMaxPool, "stem.pool1", x, 3, 2, 1);
  b.enter("stem.conv3b", "frontend");
  x = b.basic_conv("stem.conv3b", x, b.w(64), b.w(80), 1, 1);
  b.enter("stem.conv4a", "frontend");
  x = b.basic_conv("stem.conv4a", x, b.w(80), b.w(192), 3, 3);
  b.enter("stem.pool2", "frontend");
  x = b.pool(LayerKind::kMaxPool, "stem.pool2", x, 3, 2, 1);
  const Tapped feature1{x, b.w(192)};
  b.graph().taps["Feature1"] = feature1.layer;

  std::vector<std::string> fusion_inputs;
  std::size_t fusion_channels = 0;
  if (config.use_contextual_module) {
    Tapped ctx = contextual_module(b, config, feature1);
    fusion_inputs.push_back(ctx.layer);
    fusion_channels += ctx.channels;
  }
  if (config.use_inception_blocks) {
    Tapped t = inception_a(b, "mixed_5b", feature1, 32);
    t = inception_a(b, "mixed_5c", t, 64);
    t = inception_a(b, "mixed_5d", t, 64);
    b.graph().taps["Feature2"] = t.layer;
    const Tapped feature2 = t;
    t = inception_b_reduction(b, "mixed_6a", t);
    t = inception_c(b, "mixed_6b", t, 128);
    b.graph().taps["Feature3"] = t.layer;
    b.enter("fusion", "fusion");
    LayerSpec up;
    up.name = "feature3.upsample";
    up.kind = LayerKind::kUpsample;
    up.inputs = {t.layer};
    up.factor = 2;
    up.interp = config.feature3_upsample;
    b.add(up);
    fusion_inputs.push_back(feature2.layer);
    fusion_inputs.push_back(up.name);
    fusion_channels += feature2.channels + t.channels;
  }
  b.enter("fusion", "fusion");
  auto fused = b.nary(LayerKind::kConcat, "fusion.concat", fusion_inputs);

  b.enter("decoder", "decoder");
  std::size_t cin = fusion_channels;
  std::string y = fused;
  for (std::size_t i = 0; i < config.decoder_channels.size(); ++i) {
    const std::size_t k = i == 0 ? 1 : 3;
    const std::size_t cout = b.w(config.decoder_channels[i]);
    const std::string name = "decoder.conv" + std::to_string(i + 1);
    y = b.conv(name, y, cin, cout, k, k, 1, (k - 1) / 2, (k - 1) / 2, true);
    y = b.unary(LayerKind::kRelu, name + ".relu", y);
    cin = cout;
  }
  y = b.unary(LayerKind::kChannelSum, "decoder.channel_sum", y);
  b.enter("output", "io");
  LayerSpec out;
  out.name = "density";
  out.kind = LayerKind::kCropToStride;
  out.inputs = {y, "input"};
  out.factor = 8;
  b.add(out);

  GraphDescription g = std::move(b.graph());
  g.input = "input";
  g.output = "density";
  return g;
}

namespace {

template <typename Body>
GraphDescription single_block(std::size_t in_channels,
                              const ModelConfig& config, Body body) {
  Builder b(config);
  b.enter("input", "io");
  LayerSpec input;
  input.name = "input";
  input.kind = LayerKind::kInput;
  input.in_channels = input.out_channels = in_channels;
  b.add(input);
  const Tapped out = body(b, Tapped{"input", in_channels});
  GraphDescription g = std::move(b.graph());
  g.input = "input";
  g.output = out.layer;
  return g;
}

}  // namespace

GraphDescription build_inception_a(std::size_t in_channels,
                                   std::size_t pool_features,
                                   const ModelConfig& config) {
  return single_block(in_channels, config, [&](Builder& b, const Tapped& in) {
    return inception_a(b, "mixed", in, pool_features);
  });
}

GraphDescription build_inception_b_reduction(std::size_t in_channels,
                                             const ModelConfig& config) {
  return single_block(in_channels, config, [&](Builder& b, const Tapped& in) {
    return inception_b_reduction(b, "mixed", in);
  });
}

GraphDescription build_inception_c(std::size_t in_channels,
                                   std::size_t channels_7x7,
                                   const ModelConfig& config) {
  return single_block(in_channels, config, [&](Builder& b, const Tapped& in) {
    return inception_c(b, "mixed", in, channels_7x7);
  });
}

GraphDescription build_contextual_module(std::size_t channels,
                                         const ModelConfig& config) {
  config.validate();
  return single_block(channels, config, [&](Builder& b, const Tapped& in) {
    return contextual_module(b, config, in);
  });
}

GraphDescription build_vgg16_frontend(std::size_t input_channels) {
  ModelConfig cfg;
  Builder b(cfg);
  b.enter("input", "io");
  LayerSpec input;
  input.name = "input";
  input.kind = LayerKind::kInput;
  input.in_channels = input.out_channels = input_channels;
  b.add(input);
  const std::vector<std::vector<std::size_t>> stages{
      {64, 64}, {128, 128}, {256, 256, 256}, {512, 512, 512}};
  std::string x = "input";
  std::size_t cin = input_channels;
  for (std::size_t s = 0; s < stages.size(); ++s) {
    for (std::size_t i = 0; i < stages[s].size(); ++i) {
      const std::string name =
          "vgg.conv" + std::to_string(s + 1) + "_" + std::to_string(i + 1);
      b.enter(name, "frontend");
      x = b.conv(name, x, cin, stages[s][i], 3, 3, 1, 1, 1, true);
      x = b.unary(LayerKind::kRelu, name + ".relu", x);
      cin = stages[s][i];
    }
    if (s + 1 < stages.size()) {
      const std::string name = "vgg.pool" + std::to_string(s + 1);
      b.enter(name, "frontend");
      x = b.pool(LayerKind::kMaxPool, name, x, 2, 2, 0);
    }
  }
  GraphDescription g = std::move(b.graph());
  g.input = "input";
  g.output = x;
  return g;
}

namespace {

[[noreturn]] void layer_error(const LayerSpec& l, const std::string& msg) {
  throw ConfigError("layer '" + l.name + "' (" + layer_kind_name(l.kind) +
                    "): " + msg);
}

std::size_t round_up(std::size_t v, std::size_t m) { return (v + m - 1) / m * m; }

}  // namespace

std::vector<Shape> infer_shapes(const GraphDescription& graph,
                                const Shape& input_shape) {
  std::unordered_map<std::string, std::size_t> index;
  std::vector<Shape> shapes;
  shapes.reserve(graph.layers.size());
  for (std::size_t li = 0; li < graph.layers.size(); ++li) {
    const LayerSpec& l = graph.layers[li];
    std::vector<const Shape*> ins;
    for (const std::string& in : l.inputs) {
      auto it = index.find(in);
      if (it == index.end()) layer_error(l, "unknown input '" + in + "'");
      ins.push_back(&shapes[it->second]);
    }
    auto need_inputs = [&](std::size_t n) {
      if (ins.size() != n) {
        layer_error(l, "expects " + std::to_string(n) + " inputs, has " +
                           std::to_string(ins.size()));
      }
      for (const Shape* s : ins) {
        if (s->size() != 4) layer_error(l, "input is not rank 4");
      }
    };
    Shape out;
    try {
      switch (l.kind) {
        case LayerKind::kInput:
          if (input_shape.size() != 4) {
            layer_error(l, "input shape must be N,C,H,W, got " +
                               shape_to_string(input_shape));
          }
          if (l.in_channels && input_shape[1] != l.in_channels) {
            layer_error(l, "expects " + std::to_string(l.in_channels) +
                               " channels, got " +
                               std::to_string(input_shape[1]));
          }
          out = input_shape;
          break;
        case LayerKind::kPadToMultiple: {
          need_inputs(1);
          const Shape& s = *ins[0];
          out = {s[0], s[1], round_up(s[2], l.factor), round_up(s[3], l.factor)};
          break;
        }
        case LayerKind::kConv: {
          need_inputs(1);
          if ((*ins[0])[1] != l.in_channels) {
            layer_error(l, "expects " + std::to_string(l.in_channels) +
                               " input channels, got " +
                               std::to_string((*ins[0])[1]));
          }
          out = ops::conv2d_output_shape(
              *ins[0], {l.out_channels, l.in_channels, l.kernel_h, l.kernel_w},
              {l.stride_h, l.stride_w, l.pad_h, l.pad_w});
          break;
        }
        case LayerKind::kBatchNorm:
          need_inputs(1);
          if ((*ins[0])[1] != l.in_channels) {
            layer_error(l, "expects " + std::to_string(l.in_channels) +
                               " channels, got " + std::to_string((*ins[0])[1]));
          }
          out = *ins[0];
          break;
        case LayerKind::kRelu:
        case LayerKind::kSigmoid:
        case LayerKind::kAddScalar:
          need_inputs(1);
          out = *ins[0];
          break;
        case LayerKind::kMaxPool:
        case LayerKind::kAvgPool:
          need_inputs(1);
          out = ops::pool2d_output_shape(
              *ins[0], {l.kernel_h, l.kernel_w, l.stride_h, l.stride_w, l.pad_h,
                        l.pad_w});
          break;
        case LayerKind::kAdaptiveAvgPool: {
          need_inputs(1);
          const Shape& s = *ins[0];
          if (l.out_h == 0 || l.out_w == 0 || l.out_h > s[2] || l.out_w > s[3]) {
            layer_error(l, "pooling grid " + std::to_string(l.out_h) + "x" +
                               std::to_string(l.out_w) +
                               " does not fit input " + shape_to_string(s));
          }
          out = {s[0], s[1], l.out_h, l.out_w};
          break;
        }
        case LayerKind::kResizeLike: {
          need_inputs(2);
          out = {(*ins[0])[0], (*ins[0])[1], (*ins[1])[2], (*ins[1])[3]};
          break;
        }
        case LayerKind::kUpsample: {
          need_inputs(1);
          if (l.factor == 0) layer_error(l, "upsample factor must be >= 1");
          const Shape& s = *ins[0];
          out = {s[0], s[1], s[2] * l.factor, s[3] * l.factor};
          break;
        }
        case LayerKind::kConcat: {
          if (ins.empty()) layer_error(l, "needs at least one input");
          need_inputs(ins.size());
          out = *ins[0];
          out[1] = 0;
          for (const Shape* s : ins) {
            if ((*s)[0] != out[0] || (*s)[2] != out[2] || (*s)[3] != out[3]) {
              layer_error(l, "spatial mismatch " + shape_to_string(*s) +
                                 " vs " + shape_to_string(*ins[0]));
            }
            out[1] += (*s)[1];
          }
          break;
        }
        case LayerKind::kChannelSum:
          need_inputs(1);
          out = *ins[0];
          out[1] = 1;
          break;
        case LayerKind::kAdd:
        case LayerKind::kSub:
        case LayerKind::kMul:
        case LayerKind::kDiv:
          if (ins.empty()) layer_error(l, "needs at least one input");
          if (l.kind != LayerKind::kAdd) need_inputs(2);
          for (const Shape* s : ins) {
            if (*s != *ins[0]) {
              layer_error(l, "operand shapes " + shape_to_string(*ins[0]) +
                                 " and " + shape_to_string(*s) + " differ");
            }
          }
          out = *ins[0];
          break;
        case LayerKind::kCropToStride: {
          need_inputs(2);
          const Shape& s = *ins[0];
          const Shape& ref = *ins[1];
          const std::size_t h = (ref[2] + l.factor - 1) / l.factor;
          const std::size_t w = (ref[3] + l.factor - 1) / l.factor;
          if (h > s[2] || w > s[3]) {
            layer_error(l, "crop target exceeds input " + shape_to_string(s));
          }
          out = {s[0], s[1], h, w};
          break;
        }
      }
    } catch (const ShapeError& e) {
      layer_error(l, e.what());
    }
    if (!index.emplace(l.name, li).second) {
      layer_error(l, "duplicate layer name");
    }
    shapes.push_back(std::move(out));
  }
  return shapes;
}

std::size_t count_parameters(const GraphDescription& graph) {
  std::size_t total = 0;
  for (const LayerSpec& l : graph.layers) {
    if (l.kind == LayerKind::kConv) {
      total += l.out_channels * l.in_channels * l.kernel_h * l.kernel_w;
      if (l.bias) total += l.out_channels;
    } else if (l.kind == LayerKind::kBatchNorm) {
      total += 2 * l.out_channels;
    }
  }
  return total;
}

namespace {

std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string join(const std::vector<std::string>& xs, char sep) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += sep;
    out += xs[i];
  }
  return out;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::size_t parse_size(const std::string& v, const std::string& key) {
  std::size_t out = 0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ConfigError("graph text: bad integer for '" + key + "': " + v);
  }
  return out;
}

double parse_double(const std::string& v, const std::string& key) {
  double out = 0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ConfigError("graph text: bad number for '" + key + "': " + v);
  }
  return out;
}

std::pair<std::size_t, std::size_t> parse_pair(const std::string& v,
                                               const std::string& key) {
  auto parts = split(v, 'x');
  if (parts.size() != 2) {
    throw ConfigError("graph text: expected AxB for '" + key + "': " + v);
  }
  return {parse_size(parts[0], key), parse_size(parts[1], key)};
}

std::string pair(std::size_t a, std::size_t b) {
  return std::to_string(a) + "x" + std::to_string(b);
}

}  // namespace

std::string graph_to_text(const GraphDescription& graph) {
  std::ostringstream out;
  out << "# icc graph description\n";
  out << "graph version=1 input=" << graph.input << " output=" << graph.output
      << "\n";
  for (const LayerSpec& l : graph.layers) {
    out << "layer name=" << l.name << " kind=" << layer_kind_name(l.kind);
    if (!l.inputs.empty()) out << " inputs=" << join(l.inputs, ',');
    out << " block=" << l.block << " stage=" << l.stage;
    switch (l.kind) {
      case LayerKind::kInput:
        out << " channels=" << l.in_channels;
        break;
      case LayerKind::kConv:
        out << " in=" << l.in_channels << " out=" << l.out_channels
            << " kernel=" << pair(l.kernel_h, l.kernel_w)
            << " stride=" << pair(l.stride_h, l.stride_w)
            << " pad=" << pair(l.pad_h, l.pad_w) << " bias=" << (l.bias ? 1 : 0);
        break;
      case LayerKind::kBatchNorm:
        out << " channels=" << l.in_channels << " eps=" << format_double(l.eps)
            << " momentum=" << format_double(l.momentum);
        break;
      case LayerKind::kMaxPool:
      case LayerKind::kAvgPool:
        out << " window=" << pair(l.kernel_h, l.kernel_w)
            << " stride=" << pair(l.stride_h, l.stride_w)
            << " pad=" << pair(l.pad_h, l.pad_w);
        break;
      case LayerKind::kAdaptiveAvgPool:
        out << " grid=" << pair(l.out_h, l.out_w);
        break;
      case LayerKind::kResizeLike:
      case LayerKind::kUpsample:
        if (l.kind == LayerKind::kUpsample) out << " factor=" << l.factor;
        out << " method="
            << (l.interp == ops::Interpolation::kBilinear ? "bilinear"
                                                          : "nearest");
        break;
      case LayerKind::kPadToMultiple:
        out << " multiple=" << l.factor;
        break;
      case LayerKind::kCropToStride:
        out << " stride=" << l.factor;
        break;
      case LayerKind::kAddScalar:
        out << " value=" << format_double(l.scalar);
        break;
      default:
        break;
    }
    out << "\n";
  }
  for (const auto& [tap, layer] : graph.taps) {
    out << "tap name=" << tap << " layer=" << layer << "\n";
  }
  return out.str();
}

GraphDescription graph_from_text(const std::string& text) {
  GraphDescription g;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream tokens(line);
    std::string record;
    tokens >> record;
    std::map<std::string, std::string> kv;
    std::string tok;
    while (tokens >> tok) {
      auto eq = tok.find('=');
      if (eq == std::string::npos) {
        throw ConfigError("graph text line " + std::to_string(line_no) +
                          ": expected key=value, got '" + tok + "'");
      }
      kv[tok.substr(0, eq)] = tok.substr(eq + 1);
    }
    auto get = [&](const std::string& key) -> std::string {
      auto it = kv.find(key);
      if (it == kv.end()) {
        throw ConfigError("graph text line " + std::to_string(line_no) +
                          ": missing '" + key + "'");
      }
      return it->second;
    };
    if (record == "graph") {
      if (get("version") != "1") {
        throw ConfigError("graph text: unsupported version " + get("version"));
      }
      g.input = get("input");
      g.output = get("output");
    } else if (record == "tap") {
      g.taps[get("name")] = get("layer");
    } else if (record == "layer") {
      LayerSpec l;
      l.name = get("name");
      auto kind = parse_layer_kind(get("kind"));
      if (!kind) {
        throw ConfigError("graph text line " + std::to_string(line_no) +
                          ": unknown layer kind '" + get("kind") + "'");
      }
      l.kind = *kind;
      if (kv.count("inputs")) l.inputs = split(kv["inputs"], ',');
      l.block = get("block");
      l.stage = get("stage");
      switch (l.kind) {
        case LayerKind::kInput:
          l.in_channels = l.out_channels = parse_size(get("channels"), "channels");
          break;
        case LayerKind::kConv:
          l.in_channels = parse_size(get("in"), "in");
          l.out_channels = parse_size(get("out"), "out");
          std::tie(l.kernel_h, l.kernel_w) = parse_pair(get("kernel"), "kernel");
          std::tie(l.stride_h, l.stride_w) = parse_pair(get("stride"), "stride");
          std::tie(l.pad_h, l.pad_w) = parse_pair(get("pad"), "pad");
          l.bias = get("bias") == "1";
          break;
        case LayerKind::kBatchNorm:
          l.in_channels = l.out_channels = parse_size(get("channels"), "channels");
          l.eps = parse_double(get("eps"), "eps");
          l.momentum = parse_double(get("momentum"), "momentum");
          break;
        case LayerKind::kMaxPool:
        case LayerKind::kAvgPool:
          std::tie(l.kernel_h, l.kernel_w) = parse_pair(get("window"), "window");
          std::tie(l.stride_h, l.stride_w) = parse_pair(get("stride"), "stride");
          std::tie(l.pad_h, l.pad_w) = parse_pair(get("pad"), "pad");
          break;
        case LayerKind::kAdaptiveAvgPool:
          std::tie(l.out_h, l.out_w) = parse_pair(get("grid"), "grid");
          break;
        case LayerKind::kResizeLike:
        case LayerKind::kUpsample: {
          if (l.kind == LayerKind::kUpsample) {
            l.factor = parse_size(get("factor"), "factor");
          }
          const std::string m = get("method");
          if (m != "bilinear" && m != "nearest") {
            throw ConfigError("graph text: unknown interpolation '" + m + "'");
          }
          l.interp = m == "bilinear" ? ops::Interpolation::kBilinear
                                     : ops::Interpolation::kNearest;
          break;
        }
        case LayerKind::kPadToMultiple:
          l.factor = parse_size(get("multiple"), "multiple");
          break;
        case LayerKind::kCropToStride:
          l.factor = parse_size(get("stride"), "stride");
          break;
        case LayerKind::kAddScalar:
          l.scalar = parse_double(get("value"), "value");
          break;
        default:
          break;
      }
      g.layers.push_back(std::move(l));
    } else {
      throw ConfigError("graph text line " + std::to_string(line_no) +
                        ": unknown record '" + record + "'");
    }
  }
  return g;
}

}  // namespace icc
