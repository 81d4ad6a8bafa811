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

#include "icc/flops.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

#include "icc/error.hpp"

namespace icc {

const char* convention_tag(FlopConvention convention) {
  switch (convention) {
    case FlopConvention::kArithmetic:
      return "arithmetic (k mul + k-1 add per inner product)";
    case FlopConvention::kMultiplyAccumulate:
      return "mac (1 op per multiply-accumulate)";
  }
  return "unknown";
}

OpCount count_conv(std::uint64_t in_channels, std::uint64_t out_channels,
                   std::uint64_t kernel_h, std::uint64_t kernel_w,
                   std::uint64_t out_h, std::uint64_t out_w, bool bias) {
  const std::uint64_t outputs = out_h * out_w * out_channels;
  const std::uint64_t k = kernel_h * kernel_w * in_channels;
  OpCount c;
  c.multiplies = outputs * k;
  c.adds = k == 0 ? 0 : outputs * (k - 1 + (bias ? 1 : 0));
  return c;
}

namespace {

std::uint64_t numel(const Shape& s) {
  std::uint64_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

// Adds in adaptive average pooling: sum over output cells of (bin - 1).
std::uint64_t adaptive_pool_adds(std::size_t in_h, std::size_t in_w,
                                 std::size_t out_h, std::size_t out_w) {
  auto bins = [](std::size_t in, std::size_t out) {
    std::vector<std::uint64_t> sizes(out);
    for (std::size_t i = 0; i < out; ++i) {
      const std::size_t lo = i * in / out;
      const std::size_t hi = ((i + 1) * in + out - 1) / out;
      sizes[i] = hi - lo;
    }
    return sizes;
  };
  std::uint64_t adds = 0;
  for (std::uint64_t bh : bins(in_h, out_h)) {
    for (std::uint64_t bw : bins(in_w, out_w)) adds += bh * bw - 1;
  }
  return adds;
}

}  // namespace

FlopReport count_graph(const GraphDescription& graph, const Shape& input_shape,
                       FlopConvention convention) {
  FlopReport report;
  report.convention = convention;
  if (graph.layers.empty()) return report;
  const std::vector<Shape> shapes = infer_shapes(graph, input_shape);
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < graph.layers.size(); ++i) {
    index[graph.layers[i].name] = i;
  }
  for (std::size_t i = 0; i < graph.layers.size(); ++i) {
    const LayerSpec& l = graph.layers[i];
    const Shape& out = shapes[i];
    const std::uint64_t n_out = numel(out);
    auto in_shape = [&](std::size_t k) -> const Shape& {
      return shapes[index.at(l.inputs.at(k))];
    };
    LayerFlops f;
    f.name = l.name;
    f.kind = l.kind;
    f.output_shape = out;
    switch (l.kind) {
      case LayerKind::kConv: {
        const std::uint64_t batch_spatial = out[0] * out[2] * out[3];
        if (convention == FlopConvention::kArithmetic) {
          OpCount c = count_conv(l.in_channels, l.out_channels, l.kernel_h,
                                 l.kernel_w, batch_spatial, 1, l.bias);
          f.multiplies = c.multiplies;
          f.adds = c.adds;
        } else {
          f.multiplies = n_out * l.kernel_h * l.kernel_w * l.in_channels;
          f.adds = l.bias ? n_out : 0;
        }
        break;
      }
      case LayerKind::kMaxPool:
      case LayerKind::kAvgPool:
        f.other = n_out * (l.kernel_h * l.kernel_w - 1);
        break;
      case LayerKind::kAdaptiveAvgPool: {
        const Shape& s = in_shape(0);
        f.adds = s[0] * s[1] * adaptive_pool_adds(s[2], s[3], out[2], out[3]);
        break;
      }
      case LayerKind::kBatchNorm:
        f.other = 2 * n_out;
        break;
      case LayerKind::kRelu:
      case LayerKind::kSigmoid:
      case LayerKind::kAddScalar:
      case LayerKind::kSub:
      case LayerKind::kMul:
      case LayerKind::kDiv:
        f.other = n_out;
        break;
      case LayerKind::kAdd:
        f.adds = n_out * (l.inputs.size() - 1);
        break;
      case LayerKind::kResizeLike:
      case LayerKind::kUpsample:
        f.other = l.interp == ops::Interpolation::kBilinear ? 7 * n_out : 0;
        break;
      case LayerKind::kChannelSum:
        f.adds = n_out * (in_shape(0)[1] - 1);
        break;
      case LayerKind::kInput:
      case LayerKind::kPadToMultiple:
      case LayerKind::kConcat:
      case LayerKind::kCropToStride:
        break;
    }
    report.total += f.total();
    report.layers.push_back(std::move(f));
  }
  return report;
}

double factorization_savings(std::uint64_t n, std::uint64_t in_channels,
                             std::uint64_t out_channels, std::uint64_t height,
                             std::uint64_t width) {
  if (n == 0 || n % 2 == 0) throw ConfigError("kernel size must be odd");
  if (height < n || width < n || in_channels == 0 || out_channels == 0) {
    throw ConfigError("factorization extents must be positive and cover the kernel");
  }
  const std::uint64_t oh = height - n + 1, ow = width - n + 1;
  const double standard = static_cast<double>(
      count_conv(in_channels, out_channels, n, n, oh, ow, false).total());
  const double factorized = static_cast<double>(
      count_conv(in_channels, 1, 1, 1, height, width, false).total() +
      count_conv(1, out_channels, n, n, oh, ow, false).total());
  return 1.0 - factorized / standard;
}

std::string format_giga(std::uint64_t ops) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(2) << static_cast<double>(ops) / 1e9
      << " G";
  return out.str();
}

std::string report_table(const FlopReport& report) {
  std::size_t name_w = 5;
  for (const LayerFlops& f : report.layers) name_w = std::max(name_w, f.name.size());
  std::ostringstream out;
  out << std::left << std::setw(static_cast<int>(name_w) + 2) << "layer"
      << std::setw(18) << "kind" << std::setw(22) << "output" << std::right
      << std::setw(16) << "multiplies" << std::setw(16) << "adds"
      << std::setw(14) << "other" << std::setw(16) << "total" << "\n";
  for (const LayerFlops& f : report.layers) {
    out << std::left << std::setw(static_cast<int>(name_w) + 2) << f.name
        << std::setw(18) << layer_kind_name(f.kind) << std::setw(22)
        << shape_to_string(f.output_shape) << std::right << std::setw(16)
        << f.multiplies << std::setw(16) << f.adds << std::setw(14) << f.other
        << std::setw(16) << f.total() << "\n";
  }
  out << "total: " << report.total << " ops (" << format_giga(report.total)
      << "), convention: " << convention_tag(report.convention) << "\n";
  return out.str();
}

std::string report_lines(const FlopReport& report) {
  std::ostringstream out;
  for (const LayerFlops& f : report.layers) {
    out << "layer name=" << f.name << " kind=" << layer_kind_name(f.kind)
        << " shape=" << shape_to_string(f.output_shape)
        << " mul=" << f.multiplies << " add=" << f.adds << " other=" << f.other
        << " total=" << f.total() << "\n";
  }
  out << "total ops=" << report.total << " giga="
      << format_giga(report.total).substr(0, format_giga(report.total).size() - 2)
      << " convention="
      << (report.convention == FlopConvention::kArithmetic ? "arithmetic" : "mac")
      << "\n";
  return out.str();
}

}  // namespace icc
