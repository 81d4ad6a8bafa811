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

// Shared helpers for the unit tests: random tensors and a central
// finite-difference checker for autodiff graphs.

#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "icc/autodiff.hpp"
#include "icc/tensor.hpp"

namespace icc::testing {

inline Tensor<double> random_tensor(const Shape& shape, std::mt19937_64& rng,
                                    double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<double> t(shape);
  for (double& v : t.data()) v = u(rng);
  return t;
}

/// Values with |v| in [margin, 1], so kinks at 0 stay out of reach of the
/// finite-difference step.
inline Tensor<double> random_away_from_zero(const Shape& shape,
                                            std::mt19937_64& rng,
                                            double margin = 0.05) {
  std::uniform_real_distribution<double> u(margin, 1.0);
  std::bernoulli_distribution sign(0.5);
  Tensor<double> t(shape);
  for (double& v : t.data()) v = sign(rng) ? u(rng) : -u(rng);
  return t;
}

/// Builds a network on top of parameter nodes.
using GraphBuilder =
    std::function<NodeId(Graph<double>&, const std::vector<NodeId>&)>;

/// Relative L2 error between the backpropagated gradients of
/// loss = <w, f(inputs)> (w random) and central differences, taken over
/// every element of every input.
inline double gradient_error(const GraphBuilder& build,
                             const std::vector<Tensor<double>>& inputs,
                             std::uint64_t seed = 7,
                             ops::NormMode mode = ops::NormMode::kTrain,
                             double step = 1e-6) {
  std::mt19937_64 rng(seed);
  Graph<double> g;
  std::vector<NodeId> ids;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    ids.push_back(g.parameter("x" + std::to_string(i), inputs[i]));
  }
  const NodeId out = build(g, ids);
  g.forward({mode, true});
  const NodeId loss =
      g.weighted_sum(out, random_tensor(g.value(out).shape(), rng));
  g.forward({mode, true});
  g.backward(loss);
  std::vector<Tensor<double>> analytic;
  for (NodeId id : ids) analytic.push_back(g.grad(id));

  double num = 0.0, den = 0.0, ana = 0.0;
  for (std::size_t k = 0; k < ids.size(); ++k) {
    for (std::size_t i = 0; i < inputs[k].numel(); ++i) {
      const double orig = inputs[k][i];
      g.mutable_value(ids[k])[i] = orig + step;
      g.forward({mode, false});
      const double up = g.value(loss)[0];
      g.mutable_value(ids[k])[i] = orig - step;
      g.forward({mode, false});
      const double down = g.value(loss)[0];
      g.mutable_value(ids[k])[i] = orig;
      const double fd = (up - down) / (2.0 * step);
      const double d = fd - analytic[k][i];
      num += d * d;
      den += fd * fd;
      ana += analytic[k][i] * analytic[k][i];
    }
  }
  return std::sqrt(num) / std::max({std::sqrt(den), std::sqrt(ana), 1e-12});
}

/// Relative L2 error of an explicit gradient against central differences
/// of a scalar function of a vector.
inline double vector_gradient_error(
    const std::function<double(const std::vector<double>&)>& f,
    const std::vector<double>& x, const std::vector<double>& grad,
    double step = 1e-6) {
  double num = 0.0, den = 0.0, ana = 0.0;
  std::vector<double> probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + step;
    const double up = f(probe);
    probe[i] = x[i] - step;
    const double down = f(probe);
    probe[i] = x[i];
    const double fd = (up - down) / (2.0 * step);
    num += (fd - grad[i]) * (fd - grad[i]);
    den += fd * fd;
    ana += grad[i] * grad[i];
  }
  return std::sqrt(num) / std::max({std::sqrt(den), std::sqrt(ana), 1e-12});
}

inline double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    m = std::max(m, std::abs(a[i] - b[i]));
  }
  return m;
}

}  // namespace icc::testing
