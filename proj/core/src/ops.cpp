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

#include "icc/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace icc::ops {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Upper bound on the im2col scratch buffer, in elements.
constexpr std::size_t kIm2colBudget = std::size_t{1} << 21;

struct ConvGeometry {
  std::size_t batch, in_c, in_h, in_w;
  std::size_t out_c, k_h, k_w;
  std::size_t out_h, out_w;
  Conv2dParams p;

  std::size_t patch() const { return in_c * k_h * k_w; }
  std::size_t positions() const { return out_h * out_w; }
  bool pointwise() const {
    return k_h == 1 && k_w == 1 && p.stride_h == 1 && p.stride_w == 1 &&
           p.pad_h == 0 && p.pad_w == 0;
  }
  std::size_t block() const {
    return std::max<std::size_t>(1,
                                 std::min(positions(), kIm2colBudget / patch()));
  }
};

ConvGeometry conv_geometry(const Shape& input, const Shape& kernel,
                           const Conv2dParams& p) {
  Shape out = conv2d_output_shape(input, kernel, p);
  return {input[0], input[1], input[2], input[3], kernel[0], kernel[2],
          kernel[3], out[2],   out[3],   p};
}

// Fills cols (patch x count) for output positions [first, first + count).
template <typename T>
void im2col(const T* x, const ConvGeometry& g, std::size_t first,
            std::size_t count, T* cols) {
  for (std::size_t c = 0; c < g.in_c; ++c) {
    const T* plane = x + c * g.in_h * g.in_w;
    for (std::size_t i = 0; i < g.k_h; ++i) {
      for (std::size_t j = 0; j < g.k_w; ++j) {
        T* row = cols + ((c * g.k_h + i) * g.k_w + j) * count;
        for (std::size_t q = 0; q < count; ++q) {
          std::size_t pos = first + q;
          std::size_t oh = pos / g.out_w, ow = pos % g.out_w;
          long ih = static_cast<long>(oh * g.p.stride_h + i) -
                    static_cast<long>(g.p.pad_h);
          long iw = static_cast<long>(ow * g.p.stride_w + j) -
                    static_cast<long>(g.p.pad_w);
          row[q] = (ih >= 0 && iw >= 0 && ih < static_cast<long>(g.in_h) &&
                    iw < static_cast<long>(g.in_w))
                       ? plane[ih * g.in_w + iw]
                       : T(0);
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, const ConvGeometry& g, std::size_t first,
                std::size_t count, T* gx) {
  for (std::size_t c = 0; c < g.in_c; ++c) {
    T* plane = gx + c * g.in_h * g.in_w;
    for (std::size_t i = 0; i < g.k_h; ++i) {
      for (std::size_t j = 0; j < g.k_w; ++j) {
        const T* row = cols + ((c * g.k_h + i) * g.k_w + j) * count;
        for (std::size_t q = 0; q < count; ++q) {
          std::size_t pos = first + q;
          std::size_t oh = pos / g.out_w, ow = pos % g.out_w;
          long ih = static_cast<long>(oh * g.p.stride_h + i) -
                    static_cast<long>(g.p.pad_h);
          long iw = static_cast<long>(ow * g.p.stride_w + j) -
                    static_cast<long>(g.p.pad_w);
          if (ih >= 0 && iw >= 0 && ih < static_cast<long>(g.in_h) &&
              iw < static_cast<long>(g.in_w)) {
            plane[ih * g.in_w + iw] += row[q];
          }
        }
      }
    }
  }
}

void require_same_shape(const Shape& a, const Shape& b,
                        const std::string& what) {
  if (a != b) {
    throw ShapeError(what + ": gradient shape " + shape_to_string(b) +
                     " does not match " + shape_to_string(a));
  }
}

struct Axis {
  std::vector<std::size_t> lo, hi;
  std::vector<double> w_lo, w_hi;
};

// Half-pixel-center sampling positions (align_corners = false).
Axis bilinear_axis(std::size_t in, std::size_t out) {
  Axis a;
  a.lo.resize(out);
  a.hi.resize(out);
  a.w_lo.resize(out);
  a.w_hi.resize(out);
  double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
    if (src < 0) src = 0;
    auto i0 = std::min(static_cast<std::size_t>(src), in - 1);
    std::size_t i1 = std::min(i0 + 1, in - 1);
    double frac = src - static_cast<double>(i0);
    a.lo[o] = i0;
    a.hi[o] = i1;
    a.w_lo[o] = 1.0 - frac;
    a.w_hi[o] = frac;
  }
  return a;
}

std::vector<std::size_t> nearest_axis(std::size_t in, std::size_t out) {
  std::vector<std::size_t> idx(out);
  double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    idx[o] = std::min(static_cast<std::size_t>(std::floor(o * scale)), in - 1);
  }
  return idx;
}

std::size_t reflect_index(std::size_t i, std::size_t n) {
  if (n == 1) return 0;
  std::size_t period = 2 * (n - 1);
  std::size_t m = i % period;
  return m < n ? m : period - m;
}

void require_positive_extent(std::size_t h, std::size_t w,
                             const std::string& what) {
  if (h == 0 || w == 0) {
    throw ShapeError(what + ": output extent must be positive");
  }
}

}  // namespace

std::size_t conv_output_extent(std::size_t in, std::size_t kernel,
                               std::size_t stride, std::size_t pad) {
  return (in + 2 * pad - kernel) / stride + 1;
}

Shape conv2d_output_shape(const Shape& input, const Shape& kernel,
                          const Conv2dParams& p) {
  require_rank4(input, "conv2d input");
  require_rank4(kernel, "conv2d kernel");
  if (p.stride_h == 0 || p.stride_w == 0) {
    throw ShapeError("conv2d stride must be positive");
  }
  if (kernel[1] != input[1]) {
    throw ShapeError("conv2d input channels: kernel expects " +
                     std::to_string(kernel[1]) + ", input has " +
                     std::to_string(input[1]));
  }
  if (kernel[2] == 0 || kernel[3] == 0) {
    throw ShapeError("conv2d kernel extent must be positive");
  }
  if (kernel[2] > input[2] + 2 * p.pad_h) {
    throw ShapeError("conv2d height: kernel " + std::to_string(kernel[2]) +
                     " exceeds padded input " +
                     std::to_string(input[2] + 2 * p.pad_h));
  }
  if (kernel[3] > input[3] + 2 * p.pad_w) {
    throw ShapeError("conv2d width: kernel " + std::to_string(kernel[3]) +
                     " exceeds padded input " +
                     std::to_string(input[3] + 2 * p.pad_w));
  }
  return {input[0], kernel[0],
          conv_output_extent(input[2], kernel[2], p.stride_h, p.pad_h),
          conv_output_extent(input[3], kernel[3], p.stride_w, p.pad_w)};
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel,
                 const Tensor<T>* bias, const Conv2dParams& p) {
  ConvGeometry g = conv_geometry(input.shape(), kernel.shape(), p);
  if (bias && bias->numel() != g.out_c) {
    throw ShapeError("conv2d bias: expected " + std::to_string(g.out_c) +
                     " values, got " + std::to_string(bias->numel()));
  }
  Tensor<T> out({g.batch, g.out_c, g.out_h, g.out_w});
  const std::size_t K = g.patch(), P = g.positions();
  Eigen::Map<const RowMat<T>> w(kernel.raw(), g.out_c, K);
  AlignedVector<T> cols;
  for (std::size_t n = 0; n < g.batch; ++n) {
    const T* x = input.raw() + n * g.in_c * g.in_h * g.in_w;
    Eigen::Map<RowMat<T>> y(out.raw() + n * g.out_c * P, g.out_c, P);
    if (g.pointwise()) {
      y.noalias() = w * Eigen::Map<const RowMat<T>>(x, K, P);
    } else {
      const std::size_t B = g.block();
      cols.resize(K * B);
      for (std::size_t first = 0; first < P; first += B) {
        std::size_t count = std::min(B, P - first);
        im2col(x, g, first, count, cols.data());
        y.middleCols(first, count).noalias() =
            w * Eigen::Map<const RowMat<T>>(cols.data(), K, count);
      }
    }
    if (bias) {
      for (std::size_t c = 0; c < g.out_c; ++c) {
        y.row(c).array() += (*bias)[c];
      }
    }
  }
  return out;
}

template <typename T>
Conv2dGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& kernel,
                               bool has_bias, const Tensor<T>& grad_output,
                               const Conv2dParams& p) {
  ConvGeometry g = conv_geometry(input.shape(), kernel.shape(), p);
  require_same_shape(Shape{g.batch, g.out_c, g.out_h, g.out_w},
                     grad_output.shape(), "conv2d backward");
  Conv2dGrads<T> grads{Tensor<T>(input.shape()), Tensor<T>(kernel.shape()),
                       has_bias ? Tensor<T>(Shape{g.out_c}) : Tensor<T>()};
  const std::size_t K = g.patch(), P = g.positions();
  Eigen::Map<const RowMat<T>> w(kernel.raw(), g.out_c, K);
  Eigen::Map<RowMat<T>> gw(grads.kernel.raw(), g.out_c, K);
  AlignedVector<T> cols, gcols;
  for (std::size_t n = 0; n < g.batch; ++n) {
    const std::size_t in_off = n * g.in_c * g.in_h * g.in_w;
    const T* x = input.raw() + in_off;
    T* gx = grads.input.raw() + in_off;
    Eigen::Map<const RowMat<T>> gy(grad_output.raw() + n * g.out_c * P,
                                   g.out_c, P);
    if (has_bias) {
      for (std::size_t c = 0; c < g.out_c; ++c) grads.bias[c] += gy.row(c).sum();
    }
    if (g.pointwise()) {
      gw.noalias() += gy * Eigen::Map<const RowMat<T>>(x, K, P).transpose();
      Eigen::Map<RowMat<T>>(gx, K, P).noalias() = w.transpose() * gy;
      continue;
    }
    const std::size_t B = g.block();
    cols.resize(K * B);
    gcols.resize(K * B);
    for (std::size_t first = 0; first < P; first += B) {
      std::size_t count = std::min(B, P - first);
      im2col(x, g, first, count, cols.data());
      Eigen::Map<const RowMat<T>> c(cols.data(), K, count);
      gw.noalias() += gy.middleCols(first, count) * c.transpose();
      Eigen::Map<RowMat<T>> gc(gcols.data(), K, count);
      gc.noalias() = w.transpose() * gy.middleCols(first, count);
      col2im_add(gcols.data(), g, first, count, gx);
    }
  }
  return grads;
}

template <typename T>
Tensor<T> separable_conv2d(const Tensor<T>& input, const Tensor<T>& kernel_v,
                           const Tensor<T>& kernel_h) {
  require_rank4(kernel_v.shape(), "separable_conv2d vertical kernel");
  require_rank4(kernel_h.shape(), "separable_conv2d horizontal kernel");
  if (kernel_v.dim(3) != 1 || kernel_h.dim(2) != 1) {
    throw ShapeError("separable_conv2d expects n x 1 then 1 x n kernels");
  }
  Conv2dParams pv{1, 1, (kernel_v.dim(2) - 1) / 2, 0};
  Conv2dParams ph{1, 1, 0, (kernel_h.dim(3) - 1) / 2};
  const Tensor<T>* no_bias = nullptr;
  return conv2d(conv2d(input, kernel_v, no_bias, pv), kernel_h, no_bias, ph);
}

Shape pool2d_output_shape(const Shape& input, const Pool2dParams& p) {
  require_rank4(input, "pool2d input");
  if (p.window_h == 0 || p.window_w == 0) {
    throw ShapeError("pool2d window must be non-empty");
  }
  if (p.stride_h == 0 || p.stride_w == 0) {
    throw ShapeError("pool2d stride must be positive");
  }
  if (p.pad_h >= p.window_h || p.pad_w >= p.window_w) {
    throw ShapeError("pool2d padding must be smaller than the window");
  }
  if (p.window_h > input[2] + 2 * p.pad_h) {
    throw ShapeError("pool2d height: window " + std::to_string(p.window_h) +
                     " exceeds padded input " +
                     std::to_string(input[2] + 2 * p.pad_h));
  }
  if (p.window_w > input[3] + 2 * p.pad_w) {
    throw ShapeError("pool2d width: window " + std::to_string(p.window_w) +
                     " exceeds padded input " +
                     std::to_string(input[3] + 2 * p.pad_w));
  }
  return {input[0], input[1],
          conv_output_extent(input[2], p.window_h, p.stride_h, p.pad_h),
          conv_output_extent(input[3], p.window_w, p.stride_w, p.pad_w)};
}

template <typename T>
Tensor<T> max_pool2d(const Tensor<T>& input, const Pool2dParams& p,
                     std::vector<std::size_t>* argmax) {
  Shape os = pool2d_output_shape(input.shape(), p);
  Tensor<T> out(os);
  if (argmax) argmax->assign(out.numel(), 0);
  const std::size_t H = input.dim(2), W = input.dim(3);
  std::size_t o = 0;
  for (std::size_t nc = 0; nc < os[0] * os[1]; ++nc) {
    const std::size_t base = nc * H * W;
    for (std::size_t oh = 0; oh < os[2]; ++oh) {
      for (std::size_t ow = 0; ow < os[3]; ++ow, ++o) {
        T best = -std::numeric_limits<T>::infinity();
        std::size_t best_idx = base;
        for (std::size_t i = 0; i < p.window_h; ++i) {
          long ih = static_cast<long>(oh * p.stride_h + i) -
                    static_cast<long>(p.pad_h);
          if (ih < 0 || ih >= static_cast<long>(H)) continue;
          for (std::size_t j = 0; j < p.window_w; ++j) {
            long iw = static_cast<long>(ow * p.stride_w + j) -
                      static_cast<long>(p.pad_w);
            if (iw < 0 || iw >= static_cast<long>(W)) continue;
            std::size_t idx = base + ih * W + iw;
            if (input[idx] > best) {
              best = input[idx];
              best_idx = idx;
            }
          }
        }
        out[o] = best;
        if (argmax) (*argmax)[o] = best_idx;
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> max_pool2d_backward(const Shape& input_shape,
                              const std::vector<std::size_t>& argmax,
                              const Tensor<T>& grad_output) {
  if (argmax.size() != grad_output.numel()) {
    throw ShapeError("max_pool2d backward: argmax does not match gradient");
  }
  Tensor<T> gx(input_shape);
  for (std::size_t o = 0; o < argmax.size(); ++o) gx[argmax[o]] += grad_output[o];
  return gx;
}

template <typename T>
Tensor<T> avg_pool2d(const Tensor<T>& input, const Pool2dParams& p) {
  Shape os = pool2d_output_shape(input.shape(), p);
  Tensor<T> out(os);
  const std::size_t H = input.dim(2), W = input.dim(3);
  const T inv = T(1) / static_cast<T>(p.window_h * p.window_w);
  std::size_t o = 0;
  for (std::size_t nc = 0; nc < os[0] * os[1]; ++nc) {
    const T* plane = input.raw() + nc * H * W;
    for (std::size_t oh = 0; oh < os[2]; ++oh) {
      for (std::size_t ow = 0; ow < os[3]; ++ow, ++o) {
        T acc = T(0);
        for (std::size_t i = 0; i < p.window_h; ++i) {
          long ih = static_cast<long>(oh * p.stride_h + i) -
                    static_cast<long>(p.pad_h);
          if (ih < 0 || ih >= static_cast<long>(H)) continue;
          for (std::size_t j = 0; j < p.window_w; ++j) {
            long iw = static_cast<long>(ow * p.stride_w + j) -
                      static_cast<long>(p.pad_w);
            if (iw < 0 || iw >= static_cast<long>(W)) continue;
            acc += plane[ih * W + iw];
          }
        }
        out[o] = acc * inv;
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> avg_pool2d_backward(const Shape& input_shape,
                              const Tensor<T>& grad_output,
                              const Pool2dParams& p) {
  Shape os = pool2d_output_shape(input_shape, p);
  require_same_shape(os, grad_output.shape(), "avg_pool2d backward");
  Tensor<T> gx(input_shape);
  const std::size_t H = input_shape[2], W = input_shape[3];
  const T inv = T(1) / static_cast<T>(p.window_h * p.window_w);
  std::size_t o = 0;
  for (std::size_t nc = 0; nc < os[0] * os[1]; ++nc) {
    T* plane = gx.raw() + nc * H * W;
    for (std::size_t oh = 0; oh < os[2]; ++oh) {
      for (std::size_t ow = 0; ow < os[3]; ++ow, ++o) {
        const T g = grad_output[o] * inv;
        for (std::size_t i = 0; i < p.window_h; ++i) {
          long ih = static_cast<long>(oh * p.stride_h + i) -
                    static_cast<long>(p.pad_h);
          if (ih < 0 || ih >= static_cast<long>(H)) continue;
          for (std::size_t j = 0; j < p.window_w; ++j) {
            long iw = static_cast<long>(ow * p.stride_w + j) -
                      static_cast<long>(p.pad_w);
            if (iw < 0 || iw >= static_cast<long>(W)) continue;
            plane[ih * W + iw] += g;
          }
        }
      }
    }
  }
  return gx;
}

namespace {

std::size_t bin_start(std::size_t i, std::size_t in, std::size_t out) {
  return (i * in) / out;
}
std::size_t bin_end(std::size_t i, std::size_t in, std::size_t out) {
  return ((i + 1) * in + out - 1) / out;
}

}  // namespace

template <typename T>
Tensor<T> adaptive_avg_pool2d(const Tensor<T>& input, std::size_t out_h,
                              std::size_t out_w) {
  require_rank4(input.shape(), "adaptive_avg_pool2d input");
  require_positive_extent(out_h, out_w, "adaptive_avg_pool2d");
  const std::size_t H = input.dim(2), W = input.dim(3);
  if (out_h > H || out_w > W) {
    throw ShapeError("adaptive_avg_pool2d: output grid " +
                     std::to_string(out_h) + "x" + std::to_string(out_w) +
                     " exceeds input " + std::to_string(H) + "x" +
                     std::to_string(W));
  }
  Tensor<T> out({input.dim(0), input.dim(1), out_h, out_w});
  std::size_t o = 0;
  for (std::size_t nc = 0; nc < input.dim(0) * input.dim(1); ++nc) {
    const T* plane = input.raw() + nc * H * W;
    for (std::size_t i = 0; i < out_h; ++i) {
      const std::size_t h0 = bin_start(i, H, out_h), h1 = bin_end(i, H, out_h);
      for (std::size_t j = 0; j < out_w; ++j, ++o) {
        const std::size_t w0 = bin_start(j, W, out_w),
                          w1 = bin_end(j, W, out_w);
        T acc = T(0);
        for (std::size_t h = h0; h < h1; ++h) {
          for (std::size_t w = w0; w < w1; ++w) acc += plane[h * W + w];
        }
        out[o] = acc / static_cast<T>((h1 - h0) * (w1 - w0));
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> adaptive_avg_pool2d_backward(const Shape& input_shape,
                                       const Tensor<T>& grad_output) {
  require_rank4(input_shape, "adaptive_avg_pool2d backward");
  const std::size_t H = input_shape[2], W = input_shape[3];
  const std::size_t out_h = grad_output.dim(2), out_w = grad_output.dim(3);
  Tensor<T> gx(input_shape);
  std::size_t o = 0;
  for (std::size_t nc = 0; nc < input_shape[0] * input_shape[1]; ++nc) {
    T* plane = gx.raw() + nc * H * W;
    for (std::size_t i = 0; i < out_h; ++i) {
      const std::size_t h0 = bin_start(i, H, out_h), h1 = bin_end(i, H, out_h);
      for (std::size_t j = 0; j < out_w; ++j, ++o) {
        const std::size_t w0 = bin_start(j, W, out_w),
                          w1 = bin_end(j, W, out_w);
        const T g = grad_output[o] / static_cast<T>((h1 - h0) * (w1 - w0));
        for (std::size_t h = h0; h < h1; ++h) {
          for (std::size_t w = w0; w < w1; ++w) plane[h * W + w] += g;
        }
      }
    }
  }
  return gx;
}

template <typename T>
Tensor<T> batch_norm2d(const Tensor<T>& input, const Tensor<T>& gamma,
                       const Tensor<T>& beta, Tensor<T>& running_mean,
                       Tensor<T>& running_var, NormMode mode,
                       const BatchNormParams& p, BatchNormCache<T>* cache) {
  require_rank4(input.shape(), "batch_norm2d input");
  const std::size_t N = input.dim(0), C = input.dim(1),
                    HW = input.dim(2) * input.dim(3);
  const Tensor<T>* per_channel[] = {&gamma, &beta, &running_mean, &running_var};
  for (const Tensor<T>* t : per_channel) {
    if (t->numel() != C) {
      throw ShapeError("batch_norm2d: per-channel parameter has " +
                       std::to_string(t->numel()) + " values, input has " +
                       std::to_string(C) + " channels");
    }
  }
  std::vector<T> mean(C), inv_std(C);
  const std::size_t count = N * HW;
  for (std::size_t c = 0; c < C; ++c) {
    if (mode == NormMode::kTrain) {
      double s = 0;
      for (std::size_t n = 0; n < N; ++n) {
        const T* x = input.raw() + (n * C + c) * HW;
        for (std::size_t i = 0; i < HW; ++i) s += x[i];
      }
      const double m = s / static_cast<double>(count);
      double v = 0;
      for (std::size_t n = 0; n < N; ++n) {
        const T* x = input.raw() + (n * C + c) * HW;
        for (std::size_t i = 0; i < HW; ++i) v += (x[i] - m) * (x[i] - m);
      }
      const double var = v / static_cast<double>(count);
      const double unbiased =
          count > 1 ? v / static_cast<double>(count - 1) : var;
      mean[c] = static_cast<T>(m);
      inv_std[c] = static_cast<T>(1.0 / std::sqrt(var + p.eps));
      running_mean[c] = static_cast<T>((1 - p.momentum) * running_mean[c] +
                                       p.momentum * m);
      running_var[c] = static_cast<T>((1 - p.momentum) * running_var[c] +
                                      p.momentum * unbiased);
    } else {
      mean[c] = running_mean[c];
      inv_std[c] = static_cast<T>(1.0 / std::sqrt(running_var[c] + p.eps));
    }
  }
  Tensor<T> out(input.shape());
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t c = 0; c < C; ++c) {
      const T* x = input.raw() + (n * C + c) * HW;
      T* y = out.raw() + (n * C + c) * HW;
      const T scale = gamma[c] * inv_std[c];
      const T shift = beta[c] - mean[c] * scale;
      for (std::size_t i = 0; i < HW; ++i) y[i] = x[i] * scale + shift;
    }
  }
  if (cache) {
    cache->mean = std::move(mean);
    cache->inv_std = std::move(inv_std);
  }
  return out;
}

template <typename T>
BatchNormGrads<T> batch_norm2d_backward(const Tensor<T>& input,
                                        const Tensor<T>& gamma,
                                        const BatchNormCache<T>& cache,
                                        NormMode mode,
                                        const Tensor<T>& grad_output) {
  require_same_shape(input.shape(), grad_output.shape(),
                     "batch_norm2d backward");
  const std::size_t N = input.dim(0), C = input.dim(1),
                    HW = input.dim(2) * input.dim(3);
  const double count = static_cast<double>(N * HW);
  BatchNormGrads<T> g{Tensor<T>(input.shape()), Tensor<T>(Shape{C}),
                      Tensor<T>(Shape{C})};
  for (std::size_t c = 0; c < C; ++c) {
    const double m = cache.mean[c], is = cache.inv_std[c];
    double sum_g = 0, sum_gx = 0;
    for (std::size_t n = 0; n < N; ++n) {
      const T* x = input.raw() + (n * C + c) * HW;
      const T* gy = grad_output.raw() + (n * C + c) * HW;
      for (std::size_t i = 0; i < HW; ++i) {
        sum_g += gy[i];
        sum_gx += gy[i] * (x[i] - m) * is;
      }
    }
    g.beta[c] = static_cast<T>(sum_g);
    g.gamma[c] = static_cast<T>(sum_gx);
    const double k = gamma[c] * is;
    for (std::size_t n = 0; n < N; ++n) {
      const T* x = input.raw() + (n * C + c) * HW;
      const T* gy = grad_output.raw() + (n * C + c) * HW;
      T* gx = g.input.raw() + (n * C + c) * HW;
      if (mode == NormMode::kTrain) {
        for (std::size_t i = 0; i < HW; ++i) {
          const double xhat = (x[i] - m) * is;
          gx[i] = static_cast<T>(k * (gy[i] - sum_g / count -
                                      xhat * sum_gx / count));
        }
      } else {
        for (std::size_t i = 0; i < HW; ++i) gx[i] = static_cast<T>(k * gy[i]);
      }
    }
  }
  return g;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& input) {
  Tensor<T> out(input.shape());
  for (std::size_t i = 0; i < input.numel(); ++i) {
    out[i] = input[i] > T(0) ? input[i] : T(0);
  }
  return out;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& input, const Tensor<T>& grad_output) {
  require_same_shape(input.shape(), grad_output.shape(), "relu backward");
  Tensor<T> gx(input.shape());
  for (std::size_t i = 0; i < input.numel(); ++i) {
    gx[i] = input[i] > T(0) ? grad_output[i] : T(0);
  }
  return gx;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& input) {
  Tensor<T> out(input.shape());
  for (std::size_t i = 0; i < input.numel(); ++i) {
    const T x = input[i];
    // Split by sign so exp never overflows.
    if (x >= T(0)) {
      out[i] = T(1) / (T(1) + std::exp(-x));
    } else {
      const T e = std::exp(x);
      out[i] = e / (T(1) + e);
    }
  }
  return out;
}

template <typename T>
Tensor<T> sigmoid_backward(const Tensor<T>& output,
                           const Tensor<T>& grad_output) {
  require_same_shape(output.shape(), grad_output.shape(), "sigmoid backward");
  Tensor<T> gx(output.shape());
  for (std::size_t i = 0; i < output.numel(); ++i) {
    gx[i] = grad_output[i] * output[i] * (T(1) - output[i]);
  }
  return gx;
}

template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& input, std::size_t out_h,
                          std::size_t out_w) {
  require_rank4(input.shape(), "resize_bilinear input");
  require_positive_extent(out_h, out_w, "resize_bilinear");
  const std::size_t H = input.dim(2), W = input.dim(3);
  const Axis ay = bilinear_axis(H, out_h), ax = bilinear_axis(W, out_w);
  Tensor<T> out({input.dim(0), input.dim(1), out_h, out_w});
  std::size_t o = 0;
  for (std::size_t nc = 0; nc < input.dim(0) * input.dim(1); ++nc) {
    const T* plane = input.raw() + nc * H * W;
    for (std::size_t i = 0; i < out_h; ++i) {
      const T* r0 = plane + ay.lo[i] * W;
      const T* r1 = plane + ay.hi[i] * W;
      const T wy0 = static_cast<T>(ay.w_lo[i]), wy1 = static_cast<T>(ay.w_hi[i]);
      for (std::size_t j = 0; j < out_w; ++j, ++o) {
        const T wx0 = static_cast<T>(ax.w_lo[j]),
                wx1 = static_cast<T>(ax.w_hi[j]);
        out[o] = wy0 * (wx0 * r0[ax.lo[j]] + wx1 * r0[ax.hi[j]]) +
                 wy1 * (wx0 * r1[ax.lo[j]] + wx1 * r1[ax.hi[j]]);
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> resize_bilinear_backward(const Shape& input_shape,
                                   const Tensor<T>& grad_output) {
  require_rank4(input_shape, "resize_bilinear backward");
  const std::size_t H = input_shape[2], W = input_shape[3];
  const std::size_t out_h = grad_output.dim(2), out_w = grad_output.dim(3);
  const Axis ay = bilinear_axis(H, out_h), ax = bilinear_axis(W, out_w);
  Tensor<T> gx(input_shape);
  std::size_t o = 0;
  for (std::size_t nc = 0; nc < input_shape[0] * input_shape[1]; ++nc) {
    T* plane = gx.raw() + nc * H * W;
    for (std::size_t i = 0; i < out_h; ++i) {
      T* r0 = plane + ay.lo[i] * W;
      T* r1 = plane + ay.hi[i] * W;
      const T wy0 = static_cast<T>(ay.w_lo[i]), wy1 = static_cast<T>(ay.w_hi[i]);
      for (std::size_t j = 0; j < out_w; ++j, ++o) {
        const T g = grad_output[o];
        const T wx0 = static_cast<T>(ax.w_lo[j]),
                wx1 = static_cast<T>(ax.w_hi[j]);
        r0[ax.lo[j]] += g * wy0 * wx0;
        r0[ax.hi[j]] += g * wy0 * wx1;
        r1[ax.lo[j]] += g * wy1 * wx0;
        r1[ax.hi[j]] += g * wy1 * wx1;
      }
    }
  }
  return gx;
}

template <typename T>
Tensor<T> resize_nearest(const Tensor<T>& input, std::size_t out_h,
                         std::size_t out_w) {
  require_rank4(input.shape(), "resize_nearest input");
  require_positive_extent(out_h, out_w, "resize_nearest");
  const std::size_t H = input.dim(2), W = input.dim(3);
  const auto iy = nearest_axis(H, out_h), ix = nearest_axis(W, out_w);
  Tensor<T> out({input.dim(0), input.dim(1), out_h, out_w});
  std::size_t o = 0;
  for (std::size_t nc = 0; nc < input.dim(0) * input.dim(1); ++nc) {
    const T* plane = input.raw() + nc * H * W;
    for (std::size_t i = 0; i < out_h; ++i) {
      for (std::size_t j = 0; j < out_w; ++j, ++o) {
        out[o] = plane[iy[i] * W + ix[j]];
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> resize_nearest_backward(const Shape& input_shape,
                                  const Tensor<T>& grad_output) {
  require_rank4(input_shape, "resize_nearest backward");
  const std::size_t H = input_shape[2], W = input_shape[3];
  const std::size_t out_h = grad_output.dim(2), out_w = grad_output.dim(3);
  const auto iy = nearest_axis(H, out_h), ix = nearest_axis(W, out_w);
  Tensor<T> gx(input_shape);
  std::size_t o = 0;
  for (std::size_t nc = 0; nc < input_shape[0] * input_shape[1]; ++nc) {
    T* plane = gx.raw() + nc * H * W;
    for (std::size_t i = 0; i < out_h; ++i) {
      for (std::size_t j = 0; j < out_w; ++j, ++o) {
        plane[iy[i] * W + ix[j]] += grad_output[o];
      }
    }
  }
  return gx;
}

template <typename T>
Tensor<T> upsample(const Tensor<T>& input, std::size_t factor,
                   Interpolation method) {
  if (factor == 0) throw ShapeError("upsample factor must be at least 1");
  require_rank4(input.shape(), "upsample input");
  const std::size_t oh = input.dim(2) * factor, ow = input.dim(3) * factor;
  return method == Interpolation::kBilinear ? resize_bilinear(input, oh, ow)
                                            : resize_nearest(input, oh, ow);
}

template <typename T>
Tensor<T> concat_channels(const std::vector<const Tensor<T>*>& inputs) {
  if (inputs.empty()) throw ShapeError("concat_channels needs an input");
  const Shape& s0 = inputs.front()->shape();
  require_rank4(s0, "concat_channels input 0");
  std::size_t channels = 0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Shape& s = inputs[k]->shape();
    require_rank4(s, "concat_channels input " + std::to_string(k));
    if (s[0] != s0[0] || s[2] != s0[2] || s[3] != s0[3]) {
      throw ShapeError("concat_channels: input " + std::to_string(k) +
                       " has shape " + shape_to_string(s) +
                       ", incompatible with " + shape_to_string(s0) +
                       " outside the channel axis");
    }
    channels += s[1];
  }
  const std::size_t HW = s0[2] * s0[3];
  Tensor<T> out({s0[0], channels, s0[2], s0[3]});
  T* dst = out.raw();
  for (std::size_t n = 0; n < s0[0]; ++n) {
    for (const Tensor<T>* t : inputs) {
      const std::size_t block = t->dim(1) * HW;
      std::copy_n(t->raw() + n * block, block, dst);
      dst += block;
    }
  }
  return out;
}

template <typename T>
std::vector<Tensor<T>> concat_channels_backward(
    const std::vector<Shape>& input_shapes, const Tensor<T>& grad_output) {
  std::vector<Tensor<T>> grads;
  grads.reserve(input_shapes.size());
  for (const Shape& s : input_shapes) grads.emplace_back(s);
  const std::size_t N = grad_output.dim(0),
                    HW = grad_output.dim(2) * grad_output.dim(3);
  const T* src = grad_output.raw();
  for (std::size_t n = 0; n < N; ++n) {
    for (Tensor<T>& g : grads) {
      const std::size_t block = g.dim(1) * HW;
      std::copy_n(src, block, g.raw() + n * block);
      src += block;
    }
  }
  return grads;
}

template <typename T>
Tensor<T> channel_sum(const Tensor<T>& input) {
  require_rank4(input.shape(), "channel_sum input");
  const std::size_t N = input.dim(0), C = input.dim(1),
                    HW = input.dim(2) * input.dim(3);
  Tensor<T> out({N, 1, input.dim(2), input.dim(3)});
  for (std::size_t n = 0; n < N; ++n) {
    T* y = out.raw() + n * HW;
    for (std::size_t c = 0; c < C; ++c) {
      const T* x = input.raw() + (n * C + c) * HW;
      for (std::size_t i = 0; i < HW; ++i) y[i] += x[i];
    }
  }
  return out;
}

template <typename T>
Tensor<T> channel_sum_backward(const Shape& input_shape,
                               const Tensor<T>& grad_output) {
  require_rank4(input_shape, "channel_sum backward");
  const std::size_t N = input_shape[0], C = input_shape[1],
                    HW = input_shape[2] * input_shape[3];
  Tensor<T> gx(input_shape);
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t c = 0; c < C; ++c) {
      std::copy_n(grad_output.raw() + n * HW, HW, gx.raw() + (n * C + c) * HW);
    }
  }
  return gx;
}

template <typename T>
Tensor<T> reflect_pad(const Tensor<T>& input, std::size_t out_h,
                      std::size_t out_w) {
  require_rank4(input.shape(), "reflect_pad input");
  const std::size_t H = input.dim(2), W = input.dim(3);
  if (out_h < H || out_w < W) {
    throw ShapeError("reflect_pad: target " + std::to_string(out_h) + "x" +
                     std::to_string(out_w) + " is smaller than input");
  }
  Tensor<T> out({input.dim(0), input.dim(1), out_h, out_w});
  std::size_t o = 0;
  for (std::size_t nc = 0; nc < input.dim(0) * input.dim(1); ++nc) {
    const T* plane = input.raw() + nc * H * W;
    for (std::size_t i = 0; i < out_h; ++i) {
      const std::size_t si = reflect_index(i, H);
      for (std::size_t j = 0; j < out_w; ++j, ++o) {
        out[o] = plane[si * W + reflect_index(j, W)];
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> reflect_pad_backward(const Shape& input_shape,
                               const Tensor<T>& grad_output) {
  require_rank4(input_shape, "reflect_pad backward");
  const std::size_t H = input_shape[2], W = input_shape[3];
  const std::size_t out_h = grad_output.dim(2), out_w = grad_output.dim(3);
  Tensor<T> gx(input_shape);
  std::size_t o = 0;
  for (std::size_t nc = 0; nc < input_shape[0] * input_shape[1]; ++nc) {
    T* plane = gx.raw() + nc * H * W;
    for (std::size_t i = 0; i < out_h; ++i) {
      const std::size_t si = reflect_index(i, H);
      for (std::size_t j = 0; j < out_w; ++j, ++o) {
        plane[si * W + reflect_index(j, W)] += grad_output[o];
      }
    }
  }
  return gx;
}

template <typename T>
Tensor<T> crop(const Tensor<T>& input, std::size_t out_h, std::size_t out_w) {
  require_rank4(input.shape(), "crop input");
  const std::size_t H = input.dim(2), W = input.dim(3);
  if (out_h > H || out_w > W) {
    throw ShapeError("crop: target " + std::to_string(out_h) + "x" +
                     std::to_string(out_w) + " exceeds input " +
                     std::to_string(H) + "x" + std::to_string(W));
  }
  Tensor<T> out({input.dim(0), input.dim(1), out_h, out_w});
  for (std::size_t nc = 0; nc < input.dim(0) * input.dim(1); ++nc) {
    for (std::size_t i = 0; i < out_h; ++i) {
      std::copy_n(input.raw() + (nc * H + i) * W, out_w,
                  out.raw() + (nc * out_h + i) * out_w);
    }
  }
  return out;
}

template <typename T>
Tensor<T> crop_backward(const Shape& input_shape, const Tensor<T>& grad_output) {
  require_rank4(input_shape, "crop backward");
  const std::size_t H = input_shape[2], W = input_shape[3];
  const std::size_t out_h = grad_output.dim(2), out_w = grad_output.dim(3);
  Tensor<T> gx(input_shape);
  for (std::size_t nc = 0; nc < input_shape[0] * input_shape[1]; ++nc) {
    for (std::size_t i = 0; i < out_h; ++i) {
      std::copy_n(grad_output.raw() + (nc * out_h + i) * out_w, out_w,
                  gx.raw() + (nc * H + i) * W);
    }
  }
  return gx;
}

#define ICC_INSTANTIATE_OPS(T)                                                 \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&,                \
                            const Tensor<T>*, const Conv2dParams&);            \
  template Conv2dGrads<T> conv2d_backward(const Tensor<T>&, const Tensor<T>&,  \
                                          bool, const Tensor<T>&,              \
                                          const Conv2dParams&);                \
  template Tensor<T> separable_conv2d(const Tensor<T>&, const Tensor<T>&,      \
                                      const Tensor<T>&);                       \
  template Tensor<T> max_pool2d(const Tensor<T>&, const Pool2dParams&,         \
                                std::vector<std::size_t>*);                    \
  template Tensor<T> max_pool2d_backward(                                      \
      const Shape&, const std::vector<std::size_t>&, const Tensor<T>&);        \
  template Tensor<T> avg_pool2d(const Tensor<T>&, const Pool2dParams&);        \
  template Tensor<T> avg_pool2d_backward(const Shape&, const Tensor<T>&,       \
                                         const Pool2dParams&);                 \
  template Tensor<T> adaptive_avg_pool2d(const Tensor<T>&, std::size_t,        \
                                         std::size_t);                         \
  template Tensor<T> adaptive_avg_pool2d_backward(const Shape&,                \
                                                  const Tensor<T>&);           \
  template Tensor<T> batch_norm2d(const Tensor<T>&, const Tensor<T>&,          \
                                  const Tensor<T>&, Tensor<T>&, Tensor<T>&,    \
                                  NormMode, const BatchNormParams&,            \
                                  BatchNormCache<T>*);                         \
  template BatchNormGrads<T> batch_norm2d_backward(                            \
      const Tensor<T>&, const Tensor<T>&, const BatchNormCache<T>&, NormMode,  \
      const Tensor<T>&);                                                       \
  template Tensor<T> relu(const Tensor<T>&);                                   \
  template Tensor<T> relu_backward(const Tensor<T>&, const Tensor<T>&);        \
  template Tensor<T> sigmoid(const Tensor<T>&);                                \
  template Tensor<T> sigmoid_backward(const Tensor<T>&, const Tensor<T>&);     \
  template Tensor<T> resize_bilinear(const Tensor<T>&, std::size_t,            \
                                     std::size_t);                             \
  template Tensor<T> resize_bilinear_backward(const Shape&, const Tensor<T>&); \
  template Tensor<T> resize_nearest(const Tensor<T>&, std::size_t,             \
                                    std::size_t);                              \
  template Tensor<T> resize_nearest_backward(const Shape&, const Tensor<T>&);  \
  template Tensor<T> upsample(const Tensor<T>&, std::size_t, Interpolation);   \
  template Tensor<T> concat_channels(const std::vector<const Tensor<T>*>&);    \
  template std::vector<Tensor<T>> concat_channels_backward(                    \
      const std::vector<Shape>&, const Tensor<T>&);                            \
  template Tensor<T> channel_sum(const Tensor<T>&);                            \
  template Tensor<T> channel_sum_backward(const Shape&, const Tensor<T>&);     \
  template Tensor<T> reflect_pad(const Tensor<T>&, std::size_t, std::size_t);  \
  template Tensor<T> reflect_pad_backward(const Shape&, const Tensor<T>&);     \
  template Tensor<T> crop(const Tensor<T>&, std::size_t, std::size_t);         \
  template Tensor<T> crop_backward(const Shape&, const Tensor<T>&);

ICC_INSTANTIATE_OPS(float)
ICC_INSTANTIATE_OPS(double)

#undef ICC_INSTANTIATE_OPS

}  // namespace icc::ops
