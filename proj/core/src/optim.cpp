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

#include "icc/optim.hpp"

#include <cmath>
#include <string>

namespace icc {

template <typename T>
AdamW<T>::AdamW(AdamWOptions options)
    : options_(options), lr_(options.learning_rate) {
  if (!(options_.learning_rate > 0)) {
    throw ConfigError("AdamW learning rate must be positive");
  }
  if (!(options_.decay > 0 && options_.decay <= 1)) {
    throw ConfigError("AdamW decay factor must lie in (0, 1]");
  }
  if (options_.decay_interval == 0) {
    throw ConfigError("AdamW decay interval must be positive");
  }
}

template <typename T>
void AdamW<T>::step(const std::vector<Tensor<T>*>& params,
                    const std::vector<const Tensor<T>*>& grads) {
  if (params.size() != grads.size()) {
    throw ShapeError("AdamW: " + std::to_string(params.size()) +
                     " parameters but " + std::to_string(grads.size()) +
                     " gradients");
  }
  if (!m_.empty() && m_.size() != params.size()) {
    throw ShapeError("AdamW: parameter count changed between steps");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k]->shape() != grads[k]->shape()) {
      throw ShapeError("AdamW: gradient " + std::to_string(k) + " has shape " +
                       shape_to_string(grads[k]->shape()) + ", parameter has " +
                       shape_to_string(params[k]->shape()));
    }
    if (!m_.empty() && m_[k].shape() != params[k]->shape()) {
      throw ShapeError("AdamW: moment shape mismatch for parameter " +
                       std::to_string(k));
    }
    if (!grads[k]->all_finite()) {
      throw NumericError("AdamW: non-finite gradient for parameter " +
                         std::to_string(k) + ", step rejected");
    }
  }
  if (m_.empty()) {
    for (const Tensor<T>* p : params) {
      m_.emplace_back(p->shape());
      v_.emplace_back(p->shape());
    }
  }
  ++steps_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  const double lr = lr_;
  const double shrink = 1.0 - lr * options_.weight_decay;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor<T>& p = *params[k];
    const Tensor<T>& g = *grads[k];
    Tensor<T>& m = m_[k];
    Tensor<T>& v = v_[k];
    for (std::size_t i = 0; i < p.numel(); ++i) {
      const double gi = g[i];
      const double mi = b1 * m[i] + (1 - b1) * gi;
      const double vi = b2 * v[i] + (1 - b2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double update = (mi / bc1) / (std::sqrt(vi / bc2) + options_.eps);
      p[i] = static_cast<T>(p[i] * shrink - lr * update);
    }
  }
  lr_ = options_.learning_rate *
        std::pow(options_.decay,
                 static_cast<double>(steps_ / options_.decay_interval));
}

template class AdamW<float>;
template class AdamW<double>;

}  // namespace icc
