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
#include <optional>
#include <string>
#include <vector>

#include "icc/ops.hpp"
#include "icc/tensor.hpp"

namespace icc {

using NodeId = std::size_t;

enum class OpKind {
  kInput,
  kParameter,
  kConv2d,
  kMaxPool2d,
  kAvgPool2d,
  kAdaptiveAvgPool2d,
  kBatchNorm2d,
  kRelu,
  kSigmoid,
  kResizeLike,
  kUpsample,
  kConcat,
  kChannelSum,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kAddScalar,
  kPadToMultiple,
  kCropToStride,
  kSum,
  kWeightedSum,
};

const char* op_kind_name(OpKind kind);

struct NodeAttrs {
  ops::Conv2dParams conv;
  ops::Pool2dParams pool;
  ops::BatchNormParams norm;
  ops::Interpolation interp = ops::Interpolation::kBilinear;
  std::size_t out_h = 0, out_w = 0;
  std::size_t factor = 1;  // upsample factor, pad multiple or crop stride
  double scalar = 0.0;
};

template <typename T>
struct Node {
  OpKind kind = OpKind::kInput;
  std::string name;
  std::vector<NodeId> inputs;
  NodeAttrs attrs;
  bool trainable = false;

  Tensor<T> value;
  Tensor<T> grad;
  bool has_grad = false;

  // Saved by forward for backward.
  std::vector<std::size_t> argmax;
  ops::BatchNormCache<T> norm_cache;
  ops::NormMode norm_mode = ops::NormMode::kEval;
  Tensor<T> weights;  // constant weights of kWeightedSum
};

struct ForwardOptions {
  ops::NormMode mode = ops::NormMode::kEval;
  /// Keep every activation so backward can run. When false, activations
  /// are released as soon as their last consumer has executed.
  bool keep_activations = true;
};

/// Define-then-run computation graph with reverse-mode differentiation.
///
/// Nodes are appended in construction order, which is always a topological
/// order, so the graph is acyclic by construction. A built graph may be
/// executed many times with different inputs; forward and backward on one
/// instance must not be called concurrently.
template <typename T>
class Graph {
 public:
  NodeId input(std::string name);
  NodeId parameter(std::string name, Tensor<T> value, bool trainable = true);

  NodeId conv2d(NodeId x, NodeId kernel, std::optional<NodeId> bias,
                const ops::Conv2dParams& p, std::string name = {});
  NodeId max_pool2d(NodeId x, const ops::Pool2dParams& p,
                    std::string name = {});
  NodeId avg_pool2d(NodeId x, const ops::Pool2dParams& p,
                    std::string name = {});
  NodeId adaptive_avg_pool2d(NodeId x, std::size_t out_h, std::size_t out_w,
                             std::string name = {});
  NodeId batch_norm2d(NodeId x, NodeId gamma, NodeId beta,
                      NodeId running_mean, NodeId running_var,
                      const ops::BatchNormParams& p, std::string name = {});
  NodeId relu(NodeId x, std::string name = {});
  NodeId sigmoid(NodeId x, std::string name = {});
  /// Resizes x to the spatial extent of `reference`.
  NodeId resize_like(NodeId x, NodeId reference, ops::Interpolation method,
                     std::string name = {});
  NodeId upsample(NodeId x, std::size_t factor, ops::Interpolation method,
                  std::string name = {});
  NodeId concat(std::vector<NodeId> xs, std::string name = {});
  NodeId channel_sum(NodeId x, std::string name = {});
  NodeId add(std::vector<NodeId> xs, std::string name = {});
  NodeId sub(NodeId a, NodeId b, std::string name = {});
  NodeId mul(NodeId a, NodeId b, std::string name = {});
  NodeId div(NodeId a, NodeId b, std::string name = {});
  NodeId add_scalar(NodeId x, double c, std::string name = {});
  /// Reflect-pads height and width up to the next multiple.
  NodeId pad_to_multiple(NodeId x, std::size_t multiple, std::string name = {});
  /// Crops x to ceil(H/stride) x ceil(W/stride) of `reference`.
  NodeId crop_to_stride(NodeId x, NodeId reference, std::size_t stride,
                        std::string name = {});
  NodeId sum(NodeId x, std::string name = {});
  NodeId weighted_sum(NodeId x, Tensor<T> weights, std::string name = {});

  void set_input(NodeId id, Tensor<T> value);

  void forward(const ForwardOptions& options = {});
  /// Backpropagates from a scalar node.
  void backward(NodeId loss);
  /// Backpropagates an explicit upstream gradient for `output`.
  void backward(NodeId output, const Tensor<T>& seed);

  const Tensor<T>& value(NodeId id) const;
  Tensor<T>& mutable_value(NodeId id);
  const Tensor<T>& grad(NodeId id) const;

  const Node<T>& node(NodeId id) const { return nodes_.at(id); }
  std::size_t size() const noexcept { return nodes_.size(); }
  std::optional<NodeId> find(const std::string& name) const;
  std::vector<NodeId> parameters() const;
  std::vector<NodeId> trainable_parameters() const;

 private:
  NodeId add_node(OpKind kind, std::vector<NodeId> inputs, NodeAttrs attrs,
                  std::string name);
  void check_id(NodeId id) const;
  void compute(NodeId id);
  void propagate(NodeId id);
  void accumulate(NodeId id, Tensor<T> g);

  std::vector<Node<T>> nodes_;
  bool forward_done_ = false;
  bool activations_kept_ = false;
};

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace icc
