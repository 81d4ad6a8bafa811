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

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "icc/autodiff.hpp"
#include "icc/checkpoint.hpp"
#include "icc/model.hpp"

namespace icc {

/// Executable instance of a GraphDescription: owns the parameters and an
/// autodiff graph. One instance is one execution context; share weights
/// between threads by copying state, not by sharing the instance.
///
/// Parameter names are "<layer>.weight" / "<layer>.bias" for convolutions and
/// "<layer>.gamma", ".beta", ".running_mean", ".running_var" for batchnorm.
template <typename T>
class Network {
 public:
  explicit Network(GraphDescription description);

  const GraphDescription& description() const { return description_; }

  /// Fan-in scaled normal weights (std = sqrt(2 / fan_in)), zero biases,
  /// unit batchnorm scale and variance. The last convolution is scaled down
  /// by kOutputInitGain so the initial density is near crowd scale rather
  /// than hundreds of people per output cell. Deterministic per seed.
  void init_parameters(std::uint64_t seed);
  static constexpr double kOutputInitGain = 0.01;

  /// Runs the network on an N,C,H,W batch. Keep activations when a
  /// backward pass will follow.
  Tensor<T> forward(const Tensor<T>& input,
                    ops::NormMode mode = ops::NormMode::kEval,
                    bool keep_activations = false);
  /// Accumulates parameter gradients for an upstream output gradient.
  void backward(const Tensor<T>& output_grad);

  /// Value of any layer after the last forward (kept activations only).
  const Tensor<T>& activation(const std::string& layer) const;

  std::vector<std::string> trainable_names() const;
  std::vector<Tensor<T>*> trainable_parameters();
  std::vector<const Tensor<T>*> trainable_gradients() const;
  const Tensor<T>& parameter(const std::string& name) const;
  Tensor<T>& mutable_parameter(const std::string& name);
  std::size_t trainable_count() const;

  /// Every parameter including batchnorm running statistics.
  std::vector<CheckpointRecord> state() const;
  /// Replaces parameters by name; every record must match a parameter in
  /// name and shape, and every parameter must be present.
  void load_state(const std::vector<CheckpointRecord>& records);
  void save(const std::filesystem::path& path) const;
  void load(const std::filesystem::path& path);

  Graph<T>& graph() { return graph_; }

 private:
  NodeId node_of(const std::string& layer) const;
  NodeId param_node(const std::string& name) const;

  GraphDescription description_;
  Graph<T> graph_;
  NodeId input_ = 0, output_ = 0;
  std::unordered_map<std::string, NodeId> layer_nodes_;
  std::unordered_map<std::string, NodeId> param_nodes_;
  std::vector<std::string> param_order_;
};

extern template class Network<float>;
extern template class Network<double>;

}  // namespace icc
