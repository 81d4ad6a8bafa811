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
#include <vector>

#include "icc/tensor.hpp"

/// Forward and backward kernels over NCHW tensors.
///
/// Every kernel is a pure function of its arguments. Backward kernels take
/// the upstream gradient and return gradients for the differentiable inputs.
/// Padding is zero padding except for max pooling, where padded cells never
/// win the maximum.
namespace icc::ops {

struct Conv2dParams {
  std::size_t stride_h = 1;
  std::size_t stride_w = 1;
  std::size_t pad_h = 0;
  std::size_t pad_w = 0;
};

struct Pool2dParams {
  std::size_t window_h = 2;
  std::size_t window_w = 2;
  std::size_t stride_h = 2;
  std::size_t stride_w = 2;
  std::size_t pad_h = 0;
  std::size_t pad_w = 0;
};

std::size_t conv_output_extent(std::size_t in, std::size_t kernel,
                               std::size_t stride, std::size_t pad);

/// Output shape of conv2d, validating the arguments.
Shape conv2d_output_shape(const Shape& input, const Shape& kernel,
                          const Conv2dParams& p);

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel,
                 const Tensor<T>* bias, const Conv2dParams& p);

template <typename T>
struct Conv2dGrads {
  Tensor<T> input;
  Tensor<T> kernel;
  Tensor<T> bias;  // empty when the layer has no bias
};

template <typename T>
Conv2dGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& kernel,
                               bool has_bias, const Tensor<T>& grad_output,
                               const Conv2dParams& p);

/// n x 1 convolution followed by 1 x n convolution, both "same"-padded.
template <typename T>
Tensor<T> separable_conv2d(const Tensor<T>& input, const Tensor<T>& kernel_v,
                           const Tensor<T>& kernel_h);

Shape pool2d_output_shape(const Shape& input, const Pool2dParams& p);

/// Max pooling. `argmax` receives the flat input index chosen for every
/// output element and is consumed by max_pool2d_backward.
template <typename T>
Tensor<T> max_pool2d(const Tensor<T>& input, const Pool2dParams& p,
                     std::vector<std::size_t>* argmax = nullptr);

template <typename T>
Tensor<T> max_pool2d_backward(const Shape& input_shape,
                              const std::vector<std::size_t>& argmax,
                              const Tensor<T>& grad_output);

/// Average pooling; padded cells count toward the divisor.
template <typename T>
Tensor<T> avg_pool2d(const Tensor<T>& input, const Pool2dParams& p);

template <typename T>
Tensor<T> avg_pool2d_backward(const Shape& input_shape,
                              const Tensor<T>& grad_output,
                              const Pool2dParams& p);

/// Averages over bins [floor(i*H/out), ceil((i+1)*H/out)).
template <typename T>
Tensor<T> adaptive_avg_pool2d(const Tensor<T>& input, std::size_t out_h,
                              std::size_t out_w);

template <typename T>
Tensor<T> adaptive_avg_pool2d_backward(const Shape& input_shape,
                                       const Tensor<T>& grad_output);

enum class NormMode { kTrain, kEval };

struct BatchNormParams {
  double eps = 1e-3;
  double momentum = 0.1;
};

/// Statistics saved by the training-mode forward pass for backward.
template <typename T>
struct BatchNormCache {
  std::vector<T> mean;
  std::vector<T> inv_std;
};

/// Per-channel batch normalization. In train mode batch statistics are used
/// and the running statistics are updated in place (unbiased variance).
template <typename T>
Tensor<T> batch_norm2d(const Tensor<T>& input, const Tensor<T>& gamma,
                       const Tensor<T>& beta, Tensor<T>& running_mean,
                       Tensor<T>& running_var, NormMode mode,
                       const BatchNormParams& p,
                       BatchNormCache<T>* cache = nullptr);

template <typename T>
struct BatchNormGrads {
  Tensor<T> input;
  Tensor<T> gamma;
  Tensor<T> beta;
};

template <typename T>
BatchNormGrads<T> batch_norm2d_backward(const Tensor<T>& input,
                                        const Tensor<T>& gamma,
                                        const BatchNormCache<T>& cache,
                                        NormMode mode,
                                        const Tensor<T>& grad_output);

template <typename T>
Tensor<T> relu(const Tensor<T>& input);
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& input, const Tensor<T>& grad_output);

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& input);
/// Takes the sigmoid output, not its input.
template <typename T>
Tensor<T> sigmoid_backward(const Tensor<T>& output,
                           const Tensor<T>& grad_output);

enum class Interpolation { kBilinear, kNearest };

/// Bilinear resize with half-pixel centers (align_corners = false).
template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& input, std::size_t out_h,
                          std::size_t out_w);
template <typename T>
Tensor<T> resize_bilinear_backward(const Shape& input_shape,
                                   const Tensor<T>& grad_output);

template <typename T>
Tensor<T> resize_nearest(const Tensor<T>& input, std::size_t out_h,
                         std::size_t out_w);
template <typename T>
Tensor<T> resize_nearest_backward(const Shape& input_shape,
                                  const Tensor<T>& grad_output);

/// Integer-factor spatial upsampling.
template <typename T>
Tensor<T> upsample(const Tensor<T>& input, std::size_t factor,
                   Interpolation method);

template <typename T>
Tensor<T> concat_channels(const std::vector<const Tensor<T>*>& inputs);

/// Splits a channel-concatenated gradient back into per-input slices.
template <typename T>
std::vector<Tensor<T>> concat_channels_backward(
    const std::vector<Shape>& input_shapes, const Tensor<T>& grad_output);

template <typename T>
Tensor<T> channel_sum(const Tensor<T>& input);
template <typename T>
Tensor<T> channel_sum_backward(const Shape& input_shape,
                               const Tensor<T>& grad_output);

/// Reflect-pads the bottom and right edges up to out_h x out_w.
template <typename T>
Tensor<T> reflect_pad(const Tensor<T>& input, std::size_t out_h,
                      std::size_t out_w);
template <typename T>
Tensor<T> reflect_pad_backward(const Shape& input_shape,
                               const Tensor<T>& grad_output);

/// Keeps the top-left out_h x out_w window.
template <typename T>
Tensor<T> crop(const Tensor<T>& input, std::size_t out_h, std::size_t out_w);
template <typename T>
Tensor<T> crop_backward(const Shape& input_shape, const Tensor<T>& grad_output);

}  // namespace icc::ops
