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

/// A 2-D grid of non-negative people-per-pixel values.
template <typename T>
struct DensityMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<T> values;  // row-major
  bool is_ground_truth = false;

  DensityMap() = default;
  DensityMap(std::size_t h, std::size_t w, T fill = T(0), bool gt = false)
      : height(h), width(w), values(h * w, fill), is_ground_truth(gt) {}

  std::size_t size() const noexcept { return values.size(); }
  T& at(std::size_t r, std::size_t c) { return values[r * width + c]; }
  const T& at(std::size_t r, std::size_t c) const {
    return values[r * width + c];
  }
  /// Sum of all values, i.e. the estimated number of people.
  T count() const;
  /// Throws DataError on negative or non-finite values or a size mismatch.
  void validate() const;

  /// As a [1,1,h,w] tensor.
  Tensor<T> to_tensor() const;
  /// From a [1,1,h,w] or [h,w] tensor.
  static DensityMap from_tensor(const Tensor<T>& t, bool gt = false);
};

/// Discrete transport between p (rows) and q (columns).
struct TransportProblem {
  std::vector<double> p;
  std::vector<double> q;
  std::vector<double> cost;  // p.size() x q.size(), row-major
  double epsilon = 0.0;
  std::size_t max_iters = 200;
  double tolerance = 1e-6;  // L1 error on the marginals
};

struct TransportPlan {
  std::vector<double> plan;  // p.size() x q.size(), row-major
  std::vector<double> u;     // dual potential of p
  std::vector<double> v;     // dual potential of q
  double cost = 0.0;         // <plan, C>
  std::size_t iterations = 0;
  bool converged = false;
  double marginal_error = 0.0;  // before projection onto the marginals
};

/// Squared Euclidean distances between the cells of an h x w grid.
std::vector<double> grid_cost(std::size_t height, std::size_t width);
/// Default regularization: 1% of the mean cost.
double default_epsilon(const std::vector<double>& cost);
double default_grid_epsilon(std::size_t height, std::size_t width);

/// Entropic transport by log-domain Sinkhorn iterations against the product
/// measure p x q. Not converging within max_iters is reported through
/// `converged`, not thrown. The returned plan is projected onto the exact
/// marginals, so its cost never undercuts the unregularized optimum.
TransportPlan sinkhorn(const TransportProblem& problem);

struct SinkhornOptions {
  double epsilon = 0.0;  // <= 0 selects the default for the grid
  std::size_t max_iters = 200;
  double tolerance = 1e-6;
};

/// Loss value with its gradient with respect to the prediction.
template <typename T>
struct LossResult {
  T value = T(0);
  std::vector<T> grad;
};

/// | ||y||_1 - ||yhat||_1 |
template <typename T>
LossResult<T> counting_loss(const DensityMap<T>& y, const DensityMap<T>& yhat);

/// Transport loss between the normalized maps, measured as the debiased
/// entropic divergence OT(a,b) - OT(a,a)/2 - OT(b,b)/2 on the pixel grid
/// with squared Euclidean cost. Zero when the normalized maps coincide.
/// Throws DegenerateMassError when either map has zero mass.
template <typename T>
LossResult<T> ot_loss(const DensityMap<T>& y, const DensityMap<T>& yhat,
                      const SinkhornOptions& options = {});

/// 1/2 || y/||y||_1 - yhat/||yhat||_1 ||_1
template <typename T>
LossResult<T> tv_loss(const DensityMap<T>& y, const DensityMap<T>& yhat);

struct DmCountWeights {
  double lambda_ot = 0.1;
  double lambda_tv = 0.01;
};

template <typename T>
struct DmCountResult {
  T value = T(0);
  T counting = T(0);
  T ot = T(0);
  T tv = T(0);
  std::vector<T> grad;
};

/// counting + lambda_ot * ot + lambda_tv * ||y||_1 * tv.
template <typename T>
DmCountResult<T> dm_count_loss(const DensityMap<T>& y,
                               const DensityMap<T>& yhat,
                               const DmCountWeights& weights = {},
                               const SinkhornOptions& options = {});

}  // namespace icc
