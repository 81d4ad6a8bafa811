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

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "icc/error.hpp"
#include "icc/ops.hpp"
#include "test_support.hpp"

namespace icc {
namespace {

using testing::max_abs_diff;
using testing::random_tensor;

// Direct seven-loop convolution.
Tensor<double> naive_conv(const Tensor<double>& x, const Tensor<double>& k,
                          const Tensor<double>* bias, std::size_t sh,
                          std::size_t sw, std::size_t ph, std::size_t pw) {
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t O = k.dim(0), KH = k.dim(2), KW = k.dim(3);
  const std::size_t OH = (H + 2 * ph - KH) / sh + 1;
  const std::size_t OW = (W + 2 * pw - KW) / sw + 1;
  Tensor<double> y({N, O, OH, OW});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t i = 0; i < OH; ++i)
        for (std::size_t j = 0; j < OW; ++j) {
          double acc = bias ? (*bias)[o] : 0.0;
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t a = 0; a < KH; ++a)
              for (std::size_t b = 0; b < KW; ++b) {
                const long r = static_cast<long>(i * sh + a) - static_cast<long>(ph);
                const long s = static_cast<long>(j * sw + b) - static_cast<long>(pw);
                if (r < 0 || s < 0 || r >= static_cast<long>(H) ||
                    s >= static_cast<long>(W))
                  continue;
                acc += x.at(n, c, r, s) * k.at(o, c, a, b);
              }
          y.at(n, o, i, j) = acc;
        }
  return y;
}

Tensor<double> naive_pool(const Tensor<double>& x, const ops::Pool2dParams& p,
                          bool max) {
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t OH = (H + 2 * p.pad_h - p.window_h) / p.stride_h + 1;
  const std::size_t OW = (W + 2 * p.pad_w - p.window_w) / p.stride_w + 1;
  Tensor<double> y({N, C, OH, OW});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t i = 0; i < OH; ++i)
        for (std::size_t j = 0; j < OW; ++j) {
          double best = -std::numeric_limits<double>::infinity(), sum = 0.0;
          for (std::size_t a = 0; a < p.window_h; ++a)
            for (std::size_t b = 0; b < p.window_w; ++b) {
              const long r = static_cast<long>(i * p.stride_h + a) - static_cast<long>(p.pad_h);
              const long s = static_cast<long>(j * p.stride_w + b) - static_cast<long>(p.pad_w);
              if (r < 0 || s < 0 || r >= static_cast<long>(H) || s >= static_cast<long>(W))
                continue;
              best = std::max(best, x.at(n, c, r, s));
              sum += x.at(n, c, r, s);
            }
          y.at(n, c, i, j) = max ? best : sum / static_cast<double>(p.window_h * p.window_w);
        }
  return y;
}

TEST(Conv2d, MatchesDirectLoopOverStridesAndPadding) {
  std::mt19937_64 rng(1);
  struct Case { std::size_t kh, kw, sh, sw, ph, pw; };
  for (const Case& c : {Case{3, 3, 1, 1, 1, 1}, Case{3, 3, 2, 2, 1, 1},
                        Case{1, 1, 1, 1, 0, 0}, Case{1, 7, 1, 1, 0, 3},
                        Case{7, 1, 1, 1, 3, 0}, Case{5, 5, 1, 1, 2, 2},
                        Case{3, 3, 2, 2, 0, 0}, Case{2, 3, 1, 2, 0, 1}}) {
    auto x = random_tensor({2, 3, 9, 8}, rng);
    auto k = random_tensor({4, 3, c.kh, c.kw}, rng);
    auto b = random_tensor({4}, rng);
    ops::Conv2dParams p{c.sh, c.sw, c.ph, c.pw};
    auto y = ops::conv2d(x, k, &b, p);
    auto ref = naive_conv(x, k, &b, c.sh, c.sw, c.ph, c.pw);
    ASSERT_EQ(y.shape(), ref.shape());
    EXPECT_LT(max_abs_diff(y, ref), 1e-12) << "kernel " << c.kh << "x" << c.kw;
  }
}

TEST(Conv2d, FloatMatchesDouble) {
  std::mt19937_64 rng(2);
  auto x = random_tensor({1, 5, 12, 12}, rng);
  auto k = random_tensor({6, 5, 3, 3}, rng);
  auto yd = ops::conv2d<double>(x, k, nullptr, {1, 1, 1, 1});
  auto yf = ops::conv2d<float>(x.cast<float>(), k.cast<float>(), nullptr, {1, 1, 1, 1});
  EXPECT_LT(max_abs_diff(yd, yf.cast<double>()), 1e-4);
}

TEST(Conv2d, RejectsMismatchedChannelsAndEmptyOutput) {
  Tensor<double> x({1, 3, 4, 4}), k({2, 4, 3, 3}), k5({2, 3, 5, 5});
  EXPECT_THROW(ops::conv2d<double>(x, k, nullptr, {}), ShapeError);
  EXPECT_THROW(ops::conv2d<double>(x, k5, nullptr, {}), ShapeError);
  Tensor<double> bad_bias({3});
  Tensor<double> k3({2, 3, 3, 3});
  EXPECT_THROW(ops::conv2d<double>(x, k3, &bad_bias, {}), ShapeError);
}

TEST(SeparableConv2d, EqualsTwoSamePaddedConvolutions) {
  std::mt19937_64 rng(3);
  auto x = random_tensor({1, 2, 10, 9}, rng);
  auto kv = random_tensor({3, 2, 7, 1}, rng);
  auto kh = random_tensor({4, 3, 1, 7}, rng);
  auto y = ops::separable_conv2d(x, kv, kh);
  auto ref = naive_conv(naive_conv(x, kv, nullptr, 1, 1, 3, 0), kh, nullptr, 1, 1, 0, 3);
  ASSERT_EQ(y.shape(), (Shape{1, 4, 10, 9}));
  EXPECT_LT(max_abs_diff(y, ref), 1e-12);
}

TEST(SeparableConv2d, RankOneKernelEqualsFullKernel) {
  // A 3x3 kernel that is an outer product factorizes exactly.
  std::mt19937_64 rng(4);
  auto x = random_tensor({1, 1, 6, 6}, rng);
  Tensor<double> kv({1, 1, 3, 1}, {1.0, 2.0, -1.0});
  Tensor<double> kh({1, 1, 1, 3}, {0.5, -1.0, 3.0});
  Tensor<double> full({1, 1, 3, 3});
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t b = 0; b < 3; ++b) full.at(0, 0, a, b) = kv[a] * kh[b];
  auto sep = ops::separable_conv2d(x, kv, kh);
  auto ref = ops::conv2d<double>(x, full, nullptr, {1, 1, 1, 1});
  // Zero padding breaks exactness only at the border.
  for (std::size_t i = 1; i < 5; ++i)
    for (std::size_t j = 1; j < 5; ++j)
      EXPECT_NEAR(sep.at(0, 0, i, j), ref.at(0, 0, i, j), 1e-12);
}

TEST(Pooling, MaxAndAverageMatchDirectLoop) {
  std::mt19937_64 rng(5);
  for (ops::Pool2dParams p : {ops::Pool2dParams{2, 2, 2, 2, 0, 0},
                              ops::Pool2dParams{3, 3, 2, 2, 1, 1},
                              ops::Pool2dParams{3, 3, 1, 1, 1, 1},
                              ops::Pool2dParams{3, 2, 2, 1, 0, 1}}) {
    auto x = random_tensor({2, 3, 9, 7}, rng);
    EXPECT_LT(max_abs_diff(ops::max_pool2d(x, p), naive_pool(x, p, true)), 1e-15);
    EXPECT_LT(max_abs_diff(ops::avg_pool2d(x, p), naive_pool(x, p, false)), 1e-15);
  }
}

TEST(Pooling, PaddedCellsNeverWinTheMaximum) {
  Tensor<double> x({1, 1, 2, 2}, -5.0);
  auto y = ops::max_pool2d(x, {3, 3, 2, 2, 1, 1});
  EXPECT_EQ(y[0], -5.0);
}

TEST(Pooling, RejectsInvalidWindows) {
  Tensor<double> x({1, 1, 4, 4});
  EXPECT_THROW(ops::max_pool2d(x, {0, 2, 2, 2, 0, 0}), ShapeError);
  EXPECT_THROW(ops::max_pool2d(x, {2, 2, 2, 2, 2, 0}), ShapeError);
  EXPECT_THROW(ops::avg_pool2d(x, {5, 5, 1, 1, 0, 0}), ShapeError);
}

TEST(AdaptiveAvgPool, MatchesBinDefinition) {
  std::mt19937_64 rng(6);
  auto x = random_tensor({1, 2, 7, 5}, rng);
  auto y = ops::adaptive_avg_pool2d(x, 3, 2);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 2; ++j) {
        const std::size_t r0 = i * 7 / 3, r1 = ((i + 1) * 7 + 2) / 3;
        const std::size_t c0 = j * 5 / 2, c1 = ((j + 1) * 5 + 1) / 2;
        double s = 0.0;
        for (std::size_t r = r0; r < r1; ++r)
          for (std::size_t q = c0; q < c1; ++q) s += x.at(0, c, r, q);
        EXPECT_NEAR(y.at(0, c, i, j), s / ((r1 - r0) * (c1 - c0)), 1e-14);
      }
  auto g = ops::adaptive_avg_pool2d(x, 1, 1);
  double channel0 = 0.0;
  for (std::size_t i = 0; i < 35; ++i) channel0 += x[i];
  EXPECT_NEAR(g[0], channel0 / 35.0, 1e-14);
  EXPECT_THROW(ops::adaptive_avg_pool2d(x, 8, 1), ShapeError);
}

TEST(BatchNorm, TrainModeNormalizesAndUpdatesRunningStats) {
  std::mt19937_64 rng(7);
  auto x = random_tensor({3, 2, 4, 5}, rng, -2.0, 3.0);
  Tensor<double> gamma({2}, {1.5, -0.5}), beta({2}, {0.1, 0.2});
  Tensor<double> rm({2}, 0.0), rv({2}, 1.0);
  ops::BatchNormParams p{1e-3, 0.1};
  auto y = ops::batch_norm2d(x, gamma, beta, rm, rv, ops::NormMode::kTrain, p);
  for (std::size_t c = 0; c < 2; ++c) {
    double mean = 0, var = 0;
    const double m = 3 * 4 * 5;
    for (std::size_t n = 0; n < 3; ++n)
      for (std::size_t i = 0; i < 20; ++i) mean += x[(n * 2 + c) * 20 + i];
    mean /= m;
    for (std::size_t n = 0; n < 3; ++n)
      for (std::size_t i = 0; i < 20; ++i) {
        const double d = x[(n * 2 + c) * 20 + i] - mean;
        var += d * d;
      }
    var /= m;
    for (std::size_t n = 0; n < 3; ++n)
      for (std::size_t i = 0; i < 20; ++i) {
        const double expect =
            gamma[c] * (x[(n * 2 + c) * 20 + i] - mean) / std::sqrt(var + 1e-3) + beta[c];
        EXPECT_NEAR(y[(n * 2 + c) * 20 + i], expect, 1e-12);
      }
    EXPECT_NEAR(rm[c], 0.1 * mean, 1e-12);
    EXPECT_NEAR(rv[c], 0.9 + 0.1 * var * m / (m - 1), 1e-12);
  }
}

TEST(BatchNorm, EvalModeUsesRunningStats) {
  Tensor<double> x({1, 1, 1, 2}, {1.0, 3.0});
  Tensor<double> gamma({1}, 2.0), beta({1}, 1.0), rm({1}, 1.0), rv({1}, 4.0);
  auto y = ops::batch_norm2d(x, gamma, beta, rm, rv, ops::NormMode::kEval, {0.0, 0.1});
  EXPECT_DOUBLE_EQ(y[0], 1.0);
  EXPECT_DOUBLE_EQ(y[1], 3.0);
  EXPECT_DOUBLE_EQ(rm[0], 1.0);  // untouched
}

TEST(Activations, ReluAndSigmoidValues) {
  Tensor<double> x({1, 1, 1, 4}, {-2.0, 0.0, 0.5, 800.0});
  auto r = ops::relu(x);
  EXPECT_EQ(r.data()[0], 0.0);
  EXPECT_EQ(r.data()[2], 0.5);
  auto s = ops::sigmoid(Tensor<double>({1, 1, 1, 3}, {-800.0, 0.0, 800.0}));
  EXPECT_EQ(s[0], 0.0);
  EXPECT_EQ(s[1], 0.5);
  EXPECT_EQ(s[2], 1.0);
  EXPECT_TRUE(s.all_finite());
}

TEST(Resize, BilinearHalfPixelCenters) {
  Tensor<double> x({1, 1, 2, 2}, {0, 1, 2, 3});
  auto y = ops::resize_bilinear(x, 4, 4);
  const double expect[16] = {0.0, 0.25, 0.75, 1.0, 0.5, 0.75, 1.25, 1.5,
                             1.5, 1.75, 2.25, 2.5, 2.0, 2.25, 2.75, 3.0};
  for (std::size_t i = 0; i < 16; ++i) EXPECT_DOUBLE_EQ(y[i], expect[i]);
  // Same-size resize is the identity.
  EXPECT_EQ(ops::resize_bilinear(x, 2, 2), x);
}

TEST(Resize, NearestAndUpsample) {
  Tensor<double> x({1, 1, 2, 2}, {0, 1, 2, 3});
  auto y = ops::upsample(x, 2, ops::Interpolation::kNearest);
  const double expect[16] = {0, 0, 1, 1, 0, 0, 1, 1, 2, 2, 3, 3, 2, 2, 3, 3};
  for (std::size_t i = 0; i < 16; ++i) EXPECT_EQ(y[i], expect[i]);
  EXPECT_THROW(ops::upsample(x, 0, ops::Interpolation::kNearest), ShapeError);
}

TEST(Layout, ConcatChannelSumPadCrop) {
  Tensor<double> a({1, 1, 1, 3}, {1, 2, 3}), b({1, 2, 1, 3}, {4, 5, 6, 7, 8, 9});
  auto c = ops::concat_channels<double>({&a, &b});
  ASSERT_EQ(c.shape(), (Shape{1, 3, 1, 3}));
  EXPECT_EQ(c.at(0, 2, 0, 0), 7.0);
  auto s = ops::channel_sum(c);
  EXPECT_EQ(s.shape(), (Shape{1, 1, 1, 3}));
  EXPECT_EQ(s[0], 1.0 + 4.0 + 7.0);
  Tensor<double> wrong({1, 1, 2, 3});
  EXPECT_THROW(ops::concat_channels<double>({&a, &wrong}), ShapeError);

  auto padded = ops::reflect_pad(a, 1, 5);
  const double expect[5] = {1, 2, 3, 2, 1};
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(padded[i], expect[i]);
  auto cropped = ops::crop(padded, 1, 2);
  EXPECT_EQ(cropped.shape(), (Shape{1, 1, 1, 2}));
  EXPECT_EQ(cropped[1], 2.0);
}

}  // namespace
}  // namespace icc
