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
#include <vector>

#include "icc/tensor.hpp"

namespace icc {

struct AdamWOptions {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;
  /// Multiplicative learning-rate decay applied every `decay_interval` steps.
  double decay = 1.0;
  std::size_t decay_interval = 1;
};

/// AdamW with decoupled weight decay, bias-corrected moments and an
/// exponential learning-rate schedule: lr(t) = base * decay^floor(t / interval).
template <typename T>
class AdamW {
 public:
  explicit AdamW(AdamWOptions options);

  /// Applies one update. All gradients are checked before any parameter is
  /// touched; a non-finite gradient raises NumericError and leaves the
  /// parameters and optimizer state unchanged.
  void step(const std::vector<Tensor<T>*>& params,
            const std::vector<const Tensor<T>*>& grads);

  /// Learning rate that the next step will use.
  double learning_rate() const noexcept { return lr_; }
  std::size_t steps() const noexcept { return steps_; }
  const AdamWOptions& options() const noexcept { return options_; }
  const std::vector<Tensor<T>>& first_moments() const noexcept { return m_; }
  const std::vector<Tensor<T>>& second_moments() const noexcept { return v_; }

 private:
  AdamWOptions options_;
  std::vector<Tensor<T>> m_, v_;
  std::size_t steps_ = 0;
  double lr_;
};

extern template class AdamW<float>;
extern template class AdamW<double>;

}  // namespace icc
