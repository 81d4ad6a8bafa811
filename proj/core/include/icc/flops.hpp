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
#include <string>
#include <vector>

#include "icc/model.hpp"

namespace icc {

/// How a convolution's inner products are charged.
enum class FlopConvention {
  /// A length-k inner product costs k multiplies and k-1 adds (a fused
  /// multiply-add is two operations).
  kArithmetic,
  /// One operation per multiply-accumulate, the usual "FLOPs" of model
  /// zoo tables.
  kMultiplyAccumulate,
};

const char* convention_tag(FlopConvention convention);

struct OpCount {
  std::uint64_t multiplies = 0;
  std::uint64_t adds = 0;
  std::uint64_t total() const { return multiplies + adds; }
};

/// Arithmetic-convention cost of one convolution layer.
OpCount count_conv(std::uint64_t in_channels, std::uint64_t out_channels,
                   std::uint64_t kernel_h, std::uint64_t kernel_w,
                   std::uint64_t out_h, std::uint64_t out_w, bool bias);

struct LayerFlops {
  std::string name;
  LayerKind kind = LayerKind::kInput;
  Shape output_shape;
  std::uint64_t multiplies = 0;
  std::uint64_t adds = 0;
  std::uint64_t other = 0;  // compares and element-wise operations
  std::uint64_t total() const { return multiplies + adds + other; }
};

struct FlopReport {
  std::vector<LayerFlops> layers;
  std::uint64_t total = 0;
  FlopConvention convention = FlopConvention::kArithmetic;
};

/// Walks the graph with per-kind rules: convolutions per the convention;
/// pooling window-1 ops per output; batchnorm 2 per element; activations
/// and scalar/binary element-wise ops 1 per element; bilinear resize 7 per
/// output element; channel sum C-1 per output element; data movement
/// (pad, crop, concat, nearest resize) is free.
FlopReport count_graph(const GraphDescription& graph, const Shape& input_shape,
                       FlopConvention convention = FlopConvention::kArithmetic);

/// 1 - cost(1x1 reduction to one channel, then n x n) / cost(n x n), both
/// unpadded on an H x W input, under the arithmetic convention.
double factorization_savings(std::uint64_t n, std::uint64_t in_channels,
                             std::uint64_t out_channels, std::uint64_t height,
                             std::uint64_t width);

/// "125.53 G": ops / 1e9 with two decimals.
std::string format_giga(std::uint64_t ops);
/// Aligned table, one row per layer, then the grand total.
std::string report_table(const FlopReport& report);
/// One key=value record per layer plus a closing total record.
std::string report_lines(const FlopReport& report);

}  // namespace icc
