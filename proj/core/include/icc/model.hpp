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

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "icc/ops.hpp"
#include "icc/tensor.hpp"

namespace icc {

/// Architecture switches, including the two ablations of the fusion paths.
struct ModelConfig {
  std::size_t input_channels = 3;
  bool use_contextual_module = true;
  bool use_inception_blocks = true;
  std::vector<std::size_t> contextual_scales{1, 2, 3, 6};
  std::vector<std::size_t> decoder_channels{256, 128, 64};
  ops::Interpolation feature3_upsample = ops::Interpolation::kBilinear;
  /// Multiplies every channel count; 1.0 is the reference architecture.
  double width_multiplier = 1.0;
  double norm_eps = 1e-3;
  double norm_momentum = 0.1;
  double context_weight_eps = 1e-6;
  std::uint64_t seed = 0;

  /// Throws ConfigError for invalid or contradictory settings.
  void validate() const;
  /// True when either fusion path is disabled.
  bool is_ablation() const {
    return !use_contextual_module || !use_inception_blocks;
  }
  /// Channel count after applying the width multiplier.
  std::size_t width(std::size_t channels) const;
};

enum class LayerKind {
  kInput,
  kPadToMultiple,
  kConv,
  kBatchNorm,
  kRelu,
  kSigmoid,
  kMaxPool,
  kAvgPool,
  kAdaptiveAvgPool,
  kResizeLike,
  kUpsample,
  kConcat,
  kChannelSum,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kAddScalar,
  kCropToStride,
};

const char* layer_kind_name(LayerKind kind);
std::optional<LayerKind> parse_layer_kind(const std::string& name);

/// One record of a declarative network description. Only the fields that
/// are meaningful for `kind` are serialized.
struct LayerSpec {
  std::string name;
  LayerKind kind = LayerKind::kInput;
  std::vector<std::string> inputs;
  std::string block;  // architectural block the layer belongs to
  std::string stage;  // io, frontend, context, fusion or decoder

  // conv and batchnorm
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel_h = 1, kernel_w = 1;
  std::size_t stride_h = 1, stride_w = 1;
  std::size_t pad_h = 0, pad_w = 0;
  bool bias = false;
  double eps = 1e-3;
  double momentum = 0.1;
  // pools reuse kernel/stride/pad as window/stride/pad
  std::size_t out_h = 0, out_w = 0;  // adaptive pool grid
  std::size_t factor = 1;            // upsample factor, pad multiple, crop stride
  ops::Interpolation interp = ops::Interpolation::kBilinear;
  double scalar = 0.0;

  bool operator==(const LayerSpec&) const = default;
};

/// Ordered layer list plus named feature taps. Consumed both by the executor
/// and by the operation counter.
struct GraphDescription {
  std::vector<LayerSpec> layers;
  std::map<std::string, std::string> taps;  // tap name -> layer name
  std::string input;
  std::string output;

  const LayerSpec* find(const std::string& name) const;
  /// Distinct block labels of the front-end layers, in order.
  std::vector<std::string> frontend_blocks() const;

  bool operator==(const GraphDescription&) const = default;
};

/// The full counting network: Inception stem and blocks with three taps,
/// contextual module on Feature1, fusion, and the decoder.
GraphDescription build_icc(const ModelConfig& config);

/// Single-block graphs (input layer "input", output the block's concat),
/// useful for inspecting one stage in isolation.
GraphDescription build_inception_a(std::size_t in_channels,
                                   std::size_t pool_features,
                                   const ModelConfig& config = {});
GraphDescription build_inception_b_reduction(std::size_t in_channels,
                                             const ModelConfig& config = {});
GraphDescription build_inception_c(std::size_t in_channels,
                                   std::size_t channels_7x7,
                                   const ModelConfig& config = {});
/// Contextual module on a `channels`-wide base; output has 2*channels.
GraphDescription build_contextual_module(std::size_t channels,
                                         const ModelConfig& config = {});

/// A VGG-16 style front end (ten 3x3 convolutions, three max pools) used as
/// the reference point for parameter and operation counts.
GraphDescription build_vgg16_frontend(std::size_t input_channels = 3);

/// Output shape of every layer for a given input shape, in layer order.
/// Throws ConfigError naming the first layer whose shape cannot be resolved.
std::vector<Shape> infer_shapes(const GraphDescription& graph,
                                const Shape& input_shape);

/// Number of trainable scalars (conv weights/biases, batchnorm affine).
std::size_t count_parameters(const GraphDescription& graph);

/// Line-oriented text form: one "layer" or "tap" record per line.
std::string graph_to_text(const GraphDescription& graph);
GraphDescription graph_from_text(const std::string& text);

}  // namespace icc
