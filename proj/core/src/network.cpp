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

#include "icc/network.hpp"

#include <cmath>
#include <random>

#include "icc/error.hpp"

namespace icc {

template <typename T>
Network<T>::Network(GraphDescription description)
    : description_(std::move(description)) {
  auto in = [&](const LayerSpec& l, std::size_t i) {
    auto it = layer_nodes_.find(l.inputs.at(i));
    if (it == layer_nodes_.end()) {
      throw ConfigError("layer '" + l.name + "' references unknown input '" +
                        l.inputs[i] + "'");
    }
    return it->second;
  };
  auto all_inputs = [&](const LayerSpec& l) {
    std::vector<NodeId> ids;
    for (std::size_t i = 0; i < l.inputs.size(); ++i) ids.push_back(in(l, i));
    return ids;
  };
  auto param = [&](const std::string& name, Shape shape, T fill,
                   bool trainable) {
    NodeId id = graph_.parameter(name, Tensor<T>(std::move(shape), fill),
                                 trainable);
    param_nodes_[name] = id;
    param_order_.push_back(name);
    return id;
  };
  for (const LayerSpec& l : description_.layers) {
    NodeId id = 0;
    switch (l.kind) {
      case LayerKind::kInput:
        id = graph_.input(l.name);
        input_ = id;
        break;
      case LayerKind::kPadToMultiple:
        id = graph_.pad_to_multiple(in(l, 0), l.factor, l.name);
        break;
      case LayerKind::kConv: {
        NodeId k = param(l.name + ".weight",
                         {l.out_channels, l.in_channels, l.kernel_h, l.kernel_w},
                         T(0), true);
        std::optional<NodeId> b;
        if (l.bias) b = param(l.name + ".bias", {l.out_channels}, T(0), true);
        id = graph_.conv2d(in(l, 0), k, b,
                           {l.stride_h, l.stride_w, l.pad_h, l.pad_w}, l.name);
        break;
      }
      case LayerKind::kBatchNorm: {
        const Shape c{l.in_channels};
        NodeId g = param(l.name + ".gamma", c, T(1), true);
        NodeId b = param(l.name + ".beta", c, T(0), true);
        NodeId m = param(l.name + ".running_mean", c, T(0), false);
        NodeId v = param(l.name + ".running_var", c, T(1), false);
        id = graph_.batch_norm2d(in(l, 0), g, b, m, v, {l.eps, l.momentum},
                                 l.name);
        break;
      }
      case LayerKind::kRelu:
        id = graph_.relu(in(l, 0), l.name);
        break;
      case LayerKind::kSigmoid:
        id = graph_.sigmoid(in(l, 0), l.name);
        break;
      case LayerKind::kMaxPool:
      case LayerKind::kAvgPool: {
        ops::Pool2dParams p{l.kernel_h, l.kernel_w, l.stride_h,
                            l.stride_w, l.pad_h,    l.pad_w};
        id = l.kind == LayerKind::kMaxPool ? graph_.max_pool2d(in(l, 0), p, l.name)
                                           : graph_.avg_pool2d(in(l, 0), p, l.name);
        break;
      }
      case LayerKind::kAdaptiveAvgPool:
        id = graph_.adaptive_avg_pool2d(in(l, 0), l.out_h, l.out_w, l.name);
        break;
      case LayerKind::kResizeLike:
        id = graph_.resize_like(in(l, 0), in(l, 1), l.interp, l.name);
        break;
      case LayerKind::kUpsample:
        id = graph_.upsample(in(l, 0), l.factor, l.interp, l.name);
        break;
      case LayerKind::kConcat:
        id = graph_.concat(all_inputs(l), l.name);
        break;
      case LayerKind::kChannelSum:
        id = graph_.channel_sum(in(l, 0), l.name);
        break;
      case LayerKind::kAdd:
        id = graph_.add(all_inputs(l), l.name);
        break;
      case LayerKind::kSub:
        id = graph_.sub(in(l, 0), in(l, 1), l.name);
        break;
      case LayerKind::kMul:
        id = graph_.mul(in(l, 0), in(l, 1), l.name);
        break;
      case LayerKind::kDiv:
        id = graph_.div(in(l, 0), in(l, 1), l.name);
        break;
      case LayerKind::kAddScalar:
        id = graph_.add_scalar(in(l, 0), l.scalar, l.name);
        break;
      case LayerKind::kCropToStride:
        id = graph_.crop_to_stride(in(l, 0), in(l, 1), l.factor, l.name);
        break;
    }
    if (!layer_nodes_.emplace(l.name, id).second) {
      throw ConfigError("duplicate layer name '" + l.name + "'");
    }
  }
  auto out = layer_nodes_.find(description_.output);
  if (out == layer_nodes_.end()) {
    throw ConfigError("graph output '" + description_.output + "' not found");
  }
  output_ = out->second;
  if (layer_nodes_.find(description_.input) == layer_nodes_.end()) {
    throw ConfigError("graph input '" + description_.input + "' not found");
  }
  input_ = layer_nodes_.at(description_.input);
}

template <typename T>
void Network<T>::init_parameters(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const LayerSpec* last_conv = nullptr;
  for (const LayerSpec& l : description_.layers) {
    if (l.kind == LayerKind::kConv) last_conv = &l;
  }
  for (const LayerSpec& l : description_.layers) {
    if (l.kind == LayerKind::kConv) {
      Tensor<T>& w = graph_.mutable_value(param_node(l.name + ".weight"));
      const double fan_in =
          static_cast<double>(l.in_channels * l.kernel_h * l.kernel_w);
      const double gain = &l == last_conv ? kOutputInitGain : 1.0;
      std::normal_distribution<double> dist(0.0,
                                            gain * std::sqrt(2.0 / fan_in));
      for (T& v : w.data()) v = static_cast<T>(dist(rng));
      if (l.bias) graph_.mutable_value(param_node(l.name + ".bias")).fill(T(0));
    } else if (l.kind == LayerKind::kBatchNorm) {
      graph_.mutable_value(param_node(l.name + ".gamma")).fill(T(1));
      graph_.mutable_value(param_node(l.name + ".beta")).fill(T(0));
      graph_.mutable_value(param_node(l.name + ".running_mean")).fill(T(0));
      graph_.mutable_value(param_node(l.name + ".running_var")).fill(T(1));
    }
  }
}

template <typename T>
Tensor<T> Network<T>::forward(const Tensor<T>& input, ops::NormMode mode,
                              bool keep_activations) {
  graph_.set_input(input_, input);
  graph_.forward({mode, keep_activations});
  return graph_.value(output_);
}

template <typename T>
void Network<T>::backward(const Tensor<T>& output_grad) {
  graph_.backward(output_, output_grad);
}

template <typename T>
const Tensor<T>& Network<T>::activation(const std::string& layer) const {
  return graph_.value(node_of(layer));
}

template <typename T>
std::vector<std::string> Network<T>::trainable_names() const {
  std::vector<std::string> names;
  for (const std::string& n : param_order_) {
    if (graph_.node(param_nodes_.at(n)).trainable) names.push_back(n);
  }
  return names;
}

template <typename T>
std::vector<Tensor<T>*> Network<T>::trainable_parameters() {
  std::vector<Tensor<T>*> out;
  for (const std::string& n : trainable_names()) {
    out.push_back(&graph_.mutable_value(param_nodes_.at(n)));
  }
  return out;
}

template <typename T>
std::vector<const Tensor<T>*> Network<T>::trainable_gradients() const {
  std::vector<const Tensor<T>*> out;
  for (const std::string& n : trainable_names()) {
    out.push_back(&graph_.grad(param_nodes_.at(n)));
  }
  return out;
}

template <typename T>
const Tensor<T>& Network<T>::parameter(const std::string& name) const {
  return graph_.value(param_node(name));
}

template <typename T>
Tensor<T>& Network<T>::mutable_parameter(const std::string& name) {
  return graph_.mutable_value(param_node(name));
}

template <typename T>
std::size_t Network<T>::trainable_count() const {
  std::size_t n = 0;
  for (const std::string& name : trainable_names()) {
    n += graph_.value(param_nodes_.at(name)).numel();
  }
  return n;
}

template <typename T>
std::vector<CheckpointRecord> Network<T>::state() const {
  std::vector<CheckpointRecord> records;
  records.reserve(param_order_.size());
  for (const std::string& n : param_order_) {
    records.push_back(
        CheckpointRecord::from_tensor(n, graph_.value(param_nodes_.at(n))));
  }
  return records;
}

template <typename T>
void Network<T>::load_state(const std::vector<CheckpointRecord>& records) {
  std::unordered_map<std::string, const CheckpointRecord*> by_name;
  for (const CheckpointRecord& r : records) {
    if (!param_nodes_.count(r.name)) {
      throw DataError("checkpoint has unknown parameter '" + r.name + "'");
    }
    const Shape& expected = graph_.value(param_nodes_.at(r.name)).shape();
    if (r.shape != expected) {
      throw DataError("checkpoint parameter '" + r.name + "' has shape " +
                      shape_to_string(r.shape) + ", network expects " +
                      shape_to_string(expected));
    }
    by_name[r.name] = &r;
  }
  for (const std::string& n : param_order_) {
    if (!by_name.count(n)) {
      throw DataError("checkpoint is missing parameter '" + n + "'");
    }
  }
  for (const auto& [name, r] : by_name) {
    graph_.mutable_value(param_nodes_.at(name)) = r->template to_tensor<T>();
  }
}

template <typename T>
void Network<T>::save(const std::filesystem::path& path) const {
  save_checkpoint(path, state());
}

template <typename T>
void Network<T>::load(const std::filesystem::path& path) {
  load_state(load_checkpoint(path));
}

template <typename T>
NodeId Network<T>::node_of(const std::string& layer) const {
  auto it = layer_nodes_.find(layer);
  if (it == layer_nodes_.end()) {
    throw ConfigError("no layer named '" + layer + "'");
  }
  return it->second;
}

template <typename T>
NodeId Network<T>::param_node(const std::string& name) const {
  auto it = param_nodes_.find(name);
  if (it == param_nodes_.end()) {
    throw ConfigError("no parameter named '" + name + "'");
  }
  return it->second;
}

template class Network<float>;
template class Network<double>;

}  // namespace icc
