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

#include "icc/autodiff.hpp"

#include <algorithm>
#include <limits>

namespace icc {

const char* op_kind_name(OpKind kind) {
  switch (kind) {
    case OpKind::kInput: return "input";
    case OpKind::kParameter: return "parameter";
    case OpKind::kConv2d: return "conv2d";
    case OpKind::kMaxPool2d: return "max_pool2d";
    case OpKind::kAvgPool2d: return "avg_pool2d";
    case OpKind::kAdaptiveAvgPool2d: return "adaptive_avg_pool2d";
    case OpKind::kBatchNorm2d: return "batch_norm2d";
    case OpKind::kRelu: return "relu";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kResizeLike: return "resize_like";
    case OpKind::kUpsample: return "upsample";
    case OpKind::kConcat: return "concat";
    case OpKind::kChannelSum: return "channel_sum";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kDiv: return "div";
    case OpKind::kAddScalar: return "add_scalar";
    case OpKind::kPadToMultiple: return "pad_to_multiple";
    case OpKind::kCropToStride: return "crop_to_stride";
    case OpKind::kSum: return "sum";
    case OpKind::kWeightedSum: return "weighted_sum";
  }
  return "unknown";
}

namespace {

std::size_t round_up(std::size_t v, std::size_t m) { return (v + m - 1) / m * m; }
std::size_t ceil_div(std::size_t v, std::size_t m) { return (v + m - 1) / m; }

template <typename T>
void require_same(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": operand shapes " +
                     shape_to_string(a.shape()) + " and " +
                     shape_to_string(b.shape()) + " differ");
  }
}

}  // namespace

template <typename T>
NodeId Graph<T>::add_node(OpKind kind, std::vector<NodeId> inputs,
                          NodeAttrs attrs, std::string name) {
  for (NodeId in : inputs) check_id(in);
  Node<T> n;
  n.kind = kind;
  n.inputs = std::move(inputs);
  n.attrs = attrs;
  n.name = name.empty() ? std::string(op_kind_name(kind)) + "_" +
                              std::to_string(nodes_.size())
                        : std::move(name);
  nodes_.push_back(std::move(n));
  forward_done_ = false;
  return nodes_.size() - 1;
}

template <typename T>
void Graph<T>::check_id(NodeId id) const {
  if (id >= nodes_.size()) {
    throw ConfigError("graph: unknown node id " + std::to_string(id));
  }
}

template <typename T>
NodeId Graph<T>::input(std::string name) {
  return add_node(OpKind::kInput, {}, {}, std::move(name));
}

template <typename T>
NodeId Graph<T>::parameter(std::string name, Tensor<T> value, bool trainable) {
  NodeId id = add_node(OpKind::kParameter, {}, {}, std::move(name));
  nodes_[id].value = std::move(value);
  nodes_[id].trainable = trainable;
  return id;
}

template <typename T>
NodeId Graph<T>::conv2d(NodeId x, NodeId kernel, std::optional<NodeId> bias,
                        const ops::Conv2dParams& p, std::string name) {
  NodeAttrs a;
  a.conv = p;
  std::vector<NodeId> in{x, kernel};
  if (bias) in.push_back(*bias);
  return add_node(OpKind::kConv2d, std::move(in), a, std::move(name));
}

template <typename T>
NodeId Graph<T>::max_pool2d(NodeId x, const ops::Pool2dParams& p,
                            std::string name) {
  NodeAttrs a;
  a.pool = p;
  return add_node(OpKind::kMaxPool2d, {x}, a, std::move(name));
}

template <typename T>
NodeId Graph<T>::avg_pool2d(NodeId x, const ops::Pool2dParams& p,
                            std::string name) {
  NodeAttrs a;
  a.pool = p;
  return add_node(OpKind::kAvgPool2d, {x}, a, std::move(name));
}

template <typename T>
NodeId Graph<T>::adaptive_avg_pool2d(NodeId x, std::size_t out_h,
                                     std::size_t out_w, std::string name) {
  NodeAttrs a;
  a.out_h = out_h;
  a.out_w = out_w;
  return add_node(OpKind::kAdaptiveAvgPool2d, {x}, a, std::move(name));
}

template <typename T>
NodeId Graph<T>::batch_norm2d(NodeId x, NodeId gamma, NodeId beta,
                              NodeId running_mean, NodeId running_var,
                              const ops::BatchNormParams& p, std::string name) {
  NodeAttrs a;
  a.norm = p;
  return add_node(OpKind::kBatchNorm2d,
                  {x, gamma, beta, running_mean, running_var}, a,
                  std::move(name));
}

template <typename T>
NodeId Graph<T>::relu(NodeId x, std::string name) {
  return add_node(OpKind::kRelu, {x}, {}, std::move(name));
}

template <typename T>
NodeId Graph<T>::sigmoid(NodeId x, std::string name) {
  return add_node(OpKind::kSigmoid, {x}, {}, std::move(name));
}

template <typename T>
NodeId Graph<T>::resize_like(NodeId x, NodeId reference,
                             ops::Interpolation method, std::string name) {
  NodeAttrs a;
  a.interp = method;
  return add_node(OpKind::kResizeLike, {x, reference}, a, std::move(name));
}

template <typename T>
NodeId Graph<T>::upsample(NodeId x, std::size_t factor,
                          ops::Interpolation method, std::string name) {
  if (factor == 0) throw ShapeError("upsample factor must be at least 1");
  NodeAttrs a;
  a.factor = factor;
  a.interp = method;
  return add_node(OpKind::kUpsample, {x}, a, std::move(name));
}

template <typename T>
NodeId Graph<T>::concat(std::vector<NodeId> xs, std::string name) {
  if (xs.empty()) throw ShapeError("concat needs at least one input");
  return add_node(OpKind::kConcat, std::move(xs), {}, std::move(name));
}

template <typename T>
NodeId Graph<T>::channel_sum(NodeId x, std::string name) {
  return add_node(OpKind::kChannelSum, {x}, {}, std::move(name));
}

template <typename T>
NodeId Graph<T>::add(std::vector<NodeId> xs, std::string name) {
  if (xs.empty()) throw ShapeError("add needs at least one input");
  return add_node(OpKind::kAdd, std::move(xs), {}, std::move(name));
}

template <typename T>
NodeId Graph<T>::sub(NodeId a, NodeId b, std::string name) {
  return add_node(OpKind::kSub, {a, b}, {}, std::move(name));
}

template <typename T>
NodeId Graph<T>::mul(NodeId a, NodeId b, std::string name) {
  return add_node(OpKind::kMul, {a, b}, {}, std::move(name));
}

template <typename T>
NodeId Graph<T>::div(NodeId a, NodeId b, std::string name) {
  return add_node(OpKind::kDiv, {a, b}, {}, std::move(name));
}

template <typename T>
NodeId Graph<T>::add_scalar(NodeId x, double c, std::string name) {
  NodeAttrs a;
  a.scalar = c;
  return add_node(OpKind::kAddScalar, {x}, a, std::move(name));
}

template <typename T>
NodeId Graph<T>::pad_to_multiple(NodeId x, std::size_t multiple,
                                 std::string name) {
  if (multiple == 0) throw ShapeError("pad multiple must be positive");
  NodeAttrs a;
  a.factor = multiple;
  return add_node(OpKind::kPadToMultiple, {x}, a, std::move(name));
}

template <typename T>
NodeId Graph<T>::crop_to_stride(NodeId x, NodeId reference, std::size_t stride,
                                std::string name) {
  if (stride == 0) throw ShapeError("crop stride must be positive");
  NodeAttrs a;
  a.factor = stride;
  return add_node(OpKind::kCropToStride, {x, reference}, a, std::move(name));
}

template <typename T>
NodeId Graph<T>::sum(NodeId x, std::string name) {
  return add_node(OpKind::kSum, {x}, {}, std::move(name));
}

template <typename T>
NodeId Graph<T>::weighted_sum(NodeId x, Tensor<T> weights, std::string name) {
  NodeId id = add_node(OpKind::kWeightedSum, {x}, {}, std::move(name));
  nodes_[id].weights = std::move(weights);
  return id;
}

template <typename T>
void Graph<T>::set_input(NodeId id, Tensor<T> value) {
  check_id(id);
  if (nodes_[id].kind != OpKind::kInput) {
    throw ConfigError("set_input: node '" + nodes_[id].name +
                      "' is not an input");
  }
  nodes_[id].value = std::move(value);
  forward_done_ = false;
}

template <typename T>
void Graph<T>::compute(NodeId id) {
  Node<T>& n = nodes_[id];
  auto in = [&](std::size_t k) -> const Tensor<T>& {
    const Tensor<T>& v = nodes_[n.inputs[k]].value;
    if (v.empty()) {
      throw ConfigError("graph: input '" + nodes_[n.inputs[k]].name +
                        "' of '" + n.name + "' has no value");
    }
    return v;
  };
  const NodeAttrs& a = n.attrs;
  switch (n.kind) {
    case OpKind::kInput:
      if (n.value.empty()) {
        throw ConfigError("graph: input '" + n.name + "' was never set");
      }
      return;
    case OpKind::kParameter:
      return;
    case OpKind::kConv2d:
      n.value = ops::conv2d(in(0), in(1), n.inputs.size() > 2 ? &in(2) : nullptr,
                            a.conv);
      break;
    case OpKind::kMaxPool2d:
      n.value = ops::max_pool2d(in(0), a.pool, &n.argmax);
      break;
    case OpKind::kAvgPool2d:
      n.value = ops::avg_pool2d(in(0), a.pool);
      break;
    case OpKind::kAdaptiveAvgPool2d:
      n.value = ops::adaptive_avg_pool2d(in(0), a.out_h, a.out_w);
      break;
    case OpKind::kBatchNorm2d:
      n.value = ops::batch_norm2d(in(0), in(1), in(2),
                                  nodes_[n.inputs[3]].value,
                                  nodes_[n.inputs[4]].value, n.norm_mode,
                                  a.norm, &n.norm_cache);
      break;
    case OpKind::kRelu:
      n.value = ops::relu(in(0));
      break;
    case OpKind::kSigmoid:
      n.value = ops::sigmoid(in(0));
      break;
    case OpKind::kResizeLike: {
      const Tensor<T>& ref = in(1);
      require_rank4(ref.shape(), "resize_like reference");
      n.value = a.interp == ops::Interpolation::kBilinear
                    ? ops::resize_bilinear(in(0), ref.dim(2), ref.dim(3))
                    : ops::resize_nearest(in(0), ref.dim(2), ref.dim(3));
      break;
    }
    case OpKind::kUpsample:
      n.value = ops::upsample(in(0), a.factor, a.interp);
      break;
    case OpKind::kConcat: {
      std::vector<const Tensor<T>*> xs;
      for (std::size_t k = 0; k < n.inputs.size(); ++k) xs.push_back(&in(k));
      n.value = ops::concat_channels(xs);
      break;
    }
    case OpKind::kChannelSum:
      n.value = ops::channel_sum(in(0));
      break;
    case OpKind::kAdd: {
      n.value = in(0);
      for (std::size_t k = 1; k < n.inputs.size(); ++k) {
        const Tensor<T>& x = in(k);
        require_same(n.value, x, "add");
        for (std::size_t i = 0; i < x.numel(); ++i) n.value[i] += x[i];
      }
      break;
    }
    case OpKind::kSub:
    case OpKind::kMul:
    case OpKind::kDiv: {
      const Tensor<T>& x = in(0);
      const Tensor<T>& y = in(1);
      require_same(x, y, op_kind_name(n.kind));
      n.value = Tensor<T>(x.shape());
      for (std::size_t i = 0; i < x.numel(); ++i) {
        n.value[i] = n.kind == OpKind::kSub   ? x[i] - y[i]
                     : n.kind == OpKind::kMul ? x[i] * y[i]
                                              : x[i] / y[i];
      }
      break;
    }
    case OpKind::kAddScalar: {
      n.value = in(0);
      for (T& v : n.value.data()) v += static_cast<T>(a.scalar);
      break;
    }
    case OpKind::kPadToMultiple: {
      const Tensor<T>& x = in(0);
      require_rank4(x.shape(), "pad_to_multiple input");
      n.value = ops::reflect_pad(x, round_up(x.dim(2), a.factor),
                                 round_up(x.dim(3), a.factor));
      break;
    }
    case OpKind::kCropToStride: {
      const Tensor<T>& ref = in(1);
      require_rank4(ref.shape(), "crop_to_stride reference");
      n.value = ops::crop(in(0), ceil_div(ref.dim(2), a.factor),
                          ceil_div(ref.dim(3), a.factor));
      break;
    }
    case OpKind::kSum:
      n.value = Tensor<T>::scalar(in(0).sum());
      break;
    case OpKind::kWeightedSum: {
      const Tensor<T>& x = in(0);
      if (n.weights.numel() != x.numel()) {
        throw ShapeError("weighted_sum: weights have " +
                         std::to_string(n.weights.numel()) +
                         " elements, input has " + std::to_string(x.numel()));
      }
      T acc = T(0);
      for (std::size_t i = 0; i < x.numel(); ++i) acc += n.weights[i] * x[i];
      n.value = Tensor<T>::scalar(acc);
      break;
    }
  }
  require_finite(n.value, n.name);
}

template <typename T>
void Graph<T>::forward(const ForwardOptions& options) {
  std::vector<std::size_t> last_use(nodes_.size(), 0);
  std::vector<bool> consumed(nodes_.size(), false);
  for (NodeId id = 0; id < nodes_.size(); ++id) {
    for (NodeId in : nodes_[id].inputs) {
      last_use[in] = id;
      consumed[in] = true;
    }
  }
  for (Node<T>& n : nodes_) {
    n.has_grad = false;
    n.grad = Tensor<T>();
    n.norm_mode = options.mode;
  }
  for (NodeId id = 0; id < nodes_.size(); ++id) {
    compute(id);
    if (options.keep_activations) continue;
    for (NodeId in : nodes_[id].inputs) {
      Node<T>& src = nodes_[in];
      if (last_use[in] == id && src.kind != OpKind::kParameter &&
          src.kind != OpKind::kInput) {
        src.value = Tensor<T>();
        src.argmax.clear();
      }
    }
  }
  forward_done_ = true;
  activations_kept_ = options.keep_activations;
}

template <typename T>
void Graph<T>::accumulate(NodeId id, Tensor<T> g) {
  Node<T>& n = nodes_[id];
  if (!n.has_grad) {
    n.grad = std::move(g);
    n.has_grad = true;
    return;
  }
  for (std::size_t i = 0; i < g.numel(); ++i) n.grad[i] += g[i];
}

template <typename T>
void Graph<T>::backward(NodeId loss) {
  check_id(loss);
  if (!forward_done_) throw ConfigError("backward called before forward");
  if (nodes_[loss].value.numel() != 1) {
    throw ShapeError("backward: loss node '" + nodes_[loss].name +
                     "' is not scalar, shape " +
                     shape_to_string(nodes_[loss].value.shape()));
  }
  backward(loss, Tensor<T>(nodes_[loss].value.shape(), T(1)));
}

template <typename T>
void Graph<T>::backward(NodeId output, const Tensor<T>& seed) {
  check_id(output);
  if (!forward_done_) throw ConfigError("backward called before forward");
  if (!activations_kept_) {
    throw ConfigError("backward requires a forward pass that kept activations");
  }
  if (seed.shape() != nodes_[output].value.shape()) {
    throw ShapeError("backward: seed shape " + shape_to_string(seed.shape()) +
                     " does not match output " +
                     shape_to_string(nodes_[output].value.shape()));
  }
  for (Node<T>& n : nodes_) {
    n.has_grad = false;
    n.grad = Tensor<T>();
  }
  accumulate(output, seed);
  for (NodeId id = output + 1; id-- > 0;) {
    if (nodes_[id].has_grad) propagate(id);
  }
  for (Node<T>& n : nodes_) {
    if (n.kind == OpKind::kParameter && !n.has_grad) {
      n.grad = Tensor<T>(n.value.shape());
      n.has_grad = true;
    }
  }
}

template <typename T>
void Graph<T>::propagate(NodeId id) {
  Node<T>& n = nodes_[id];
  const Tensor<T>& g = n.grad;
  auto val = [&](std::size_t k) -> const Tensor<T>& {
    return nodes_[n.inputs[k]].value;
  };
  const NodeAttrs& a = n.attrs;
  switch (n.kind) {
    case OpKind::kInput:
    case OpKind::kParameter:
      return;
    case OpKind::kConv2d: {
      const bool has_bias = n.inputs.size() > 2;
      auto gr = ops::conv2d_backward(val(0), val(1), has_bias, g, a.conv);
      accumulate(n.inputs[0], std::move(gr.input));
      accumulate(n.inputs[1], std::move(gr.kernel));
      if (has_bias) accumulate(n.inputs[2], std::move(gr.bias));
      return;
    }
    case OpKind::kMaxPool2d:
      accumulate(n.inputs[0],
                 ops::max_pool2d_backward(val(0).shape(), n.argmax, g));
      return;
    case OpKind::kAvgPool2d:
      accumulate(n.inputs[0], ops::avg_pool2d_backward(val(0).shape(), g, a.pool));
      return;
    case OpKind::kAdaptiveAvgPool2d:
      accumulate(n.inputs[0],
                 ops::adaptive_avg_pool2d_backward(val(0).shape(), g));
      return;
    case OpKind::kBatchNorm2d: {
      auto gr = ops::batch_norm2d_backward(val(0), val(1), n.norm_cache,
                                           n.norm_mode, g);
      accumulate(n.inputs[0], std::move(gr.input));
      accumulate(n.inputs[1], std::move(gr.gamma));
      accumulate(n.inputs[2], std::move(gr.beta));
      return;
    }
    case OpKind::kRelu:
      accumulate(n.inputs[0], ops::relu_backward(val(0), g));
      return;
    case OpKind::kSigmoid:
      accumulate(n.inputs[0], ops::sigmoid_backward(n.value, g));
      return;
    case OpKind::kResizeLike:
    case OpKind::kUpsample:
      accumulate(n.inputs[0],
                 a.interp == ops::Interpolation::kBilinear
                     ? ops::resize_bilinear_backward(val(0).shape(), g)
                     : ops::resize_nearest_backward(val(0).shape(), g));
      return;
    case OpKind::kConcat: {
      std::vector<Shape> shapes;
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        shapes.push_back(val(k).shape());
      }
      auto parts = ops::concat_channels_backward(shapes, g);
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        accumulate(n.inputs[k], std::move(parts[k]));
      }
      return;
    }
    case OpKind::kChannelSum:
      accumulate(n.inputs[0], ops::channel_sum_backward(val(0).shape(), g));
      return;
    case OpKind::kAdd:
      for (NodeId in : n.inputs) accumulate(in, g);
      return;
    case OpKind::kSub: {
      Tensor<T> neg = g;
      for (T& v : neg.data()) v = -v;
      accumulate(n.inputs[0], g);
      accumulate(n.inputs[1], std::move(neg));
      return;
    }
    case OpKind::kMul: {
      const Tensor<T>& x = val(0);
      const Tensor<T>& y = val(1);
      Tensor<T> gx(x.shape()), gy(y.shape());
      for (std::size_t i = 0; i < g.numel(); ++i) {
        gx[i] = g[i] * y[i];
        gy[i] = g[i] * x[i];
      }
      accumulate(n.inputs[0], std::move(gx));
      accumulate(n.inputs[1], std::move(gy));
      return;
    }
    case OpKind::kDiv: {
      const Tensor<T>& y = val(1);
      Tensor<T> gx(y.shape()), gy(y.shape());
      for (std::size_t i = 0; i < g.numel(); ++i) {
        gx[i] = g[i] / y[i];
        gy[i] = -g[i] * n.value[i] / y[i];
      }
      accumulate(n.inputs[0], std::move(gx));
      accumulate(n.inputs[1], std::move(gy));
      return;
    }
    case OpKind::kAddScalar:
      accumulate(n.inputs[0], g);
      return;
    case OpKind::kPadToMultiple:
      accumulate(n.inputs[0], ops::reflect_pad_backward(val(0).shape(), g));
      return;
    case OpKind::kCropToStride:
      accumulate(n.inputs[0], ops::crop_backward(val(0).shape(), g));
      return;
    case OpKind::kSum:
      accumulate(n.inputs[0], Tensor<T>(val(0).shape(), g[0]));
      return;
    case OpKind::kWeightedSum: {
      Tensor<T> gx(val(0).shape());
      for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] = g[0] * n.weights[i];
      accumulate(n.inputs[0], std::move(gx));
      return;
    }
  }
}

template <typename T>
const Tensor<T>& Graph<T>::value(NodeId id) const {
  check_id(id);
  return nodes_[id].value;
}

template <typename T>
Tensor<T>& Graph<T>::mutable_value(NodeId id) {
  check_id(id);
  forward_done_ = false;
  return nodes_[id].value;
}

template <typename T>
const Tensor<T>& Graph<T>::grad(NodeId id) const {
  check_id(id);
  if (!nodes_[id].has_grad) {
    throw ConfigError("graph: node '" + nodes_[id].name + "' has no gradient");
  }
  return nodes_[id].grad;
}

template <typename T>
std::optional<NodeId> Graph<T>::find(const std::string& name) const {
  for (NodeId id = 0; id < nodes_.size(); ++id) {
    if (nodes_[id].name == name) return id;
  }
  return std::nullopt;
}

template <typename T>
std::vector<NodeId> Graph<T>::parameters() const {
  std::vector<NodeId> out;
  for (NodeId id = 0; id < nodes_.size(); ++id) {
    if (nodes_[id].kind == OpKind::kParameter) out.push_back(id);
  }
  return out;
}

template <typename T>
std::vector<NodeId> Graph<T>::trainable_parameters() const {
  std::vector<NodeId> out;
  for (NodeId id = 0; id < nodes_.size(); ++id) {
    if (nodes_[id].kind == OpKind::kParameter && nodes_[id].trainable) {
      out.push_back(id);
    }
  }
  return out;
}

template class Graph<float>;
template class Graph<double>;

}  // namespace icc
