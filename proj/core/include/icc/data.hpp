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

#include <array>
#include <cstdint>
#include <future>
#include <random>
#include <string>
#include <vector>

#include "icc/dmcount.hpp"
#include "icc/tensor.hpp"

namespace icc {

/// Head position in pixel coordinates: x is the column, y the row.
struct Point {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point&) const = default;
};

struct AnnotatedImage {
  Tensor<float> image;  // [3,H,W], values in [0,1]
  std::vector<Point> points;
  std::string id;

  std::size_t height() const { return image.dim(1); }
  std::size_t width() const { return image.dim(2); }
  std::size_t count() const { return points.size(); }
  /// Throws DataError for a malformed image or out-of-bounds point.
  void validate() const;
};

struct Sample {
  Tensor<float> image;         // [3,hc,wc]
  DensityMap<float> target;    // ceil(hc/8) x ceil(wc/8)
  std::string source_id;
  std::size_t offset_y = 0, offset_x = 0;
};

/// One unit per point at (floor(y), floor(x)); coinciding points add up.
DensityMap<float> rasterize(const std::vector<Point>& points, std::size_t height,
                            std::size_t width, const std::string& id = {});

/// Non-overlapping factor x factor sum pooling, zero-padded at ragged edges.
DensityMap<float> sum_pool(const DensityMap<float>& map, std::size_t factor);
inline DensityMap<float> downsample_by_8(const DensityMap<float>& map) {
  return sum_pool(map, 8);
}

/// Crop at a fixed offset; the target is rebuilt from the points inside.
Sample crop_at(const AnnotatedImage& image, std::size_t offset_y,
               std::size_t offset_x, std::size_t crop_h, std::size_t crop_w);
/// Crop at a uniformly drawn offset; deterministic given the rng state.
Sample random_crop(const AnnotatedImage& image, std::size_t crop_h,
                   std::size_t crop_w, std::mt19937_64& rng);
/// Full-image sample (no crop).
Sample full_sample(const AnnotatedImage& image);

/// Zero-pads an image at the bottom/right so it is at least h x w.
AnnotatedImage pad_to_at_least(const AnnotatedImage& image, std::size_t h,
                               std::size_t w);

/// Per-channel statistics used by normalize (ImageNet convention).
inline constexpr std::array<float, 3> kChannelMean{0.485f, 0.456f, 0.406f};
inline constexpr std::array<float, 3> kChannelStd{0.229f, 0.224f, 0.225f};

/// (value - mean) / std per channel, for [3,H,W] or [N,3,H,W] tensors.
Tensor<float> normalize(const Tensor<float>& image);
Tensor<float> denormalize(const Tensor<float>& image);

struct SyntheticOptions {
  std::size_t min_count = 5;
  std::size_t max_count = 50;
  std::size_t height = 256;
  std::size_t width = 256;
  std::size_t n_images = 0;
  std::uint64_t seed = 0;
  double blob_sigma = 2.5;  // pixels
  std::string id_prefix = "synth";
};

/// Gaussian "heads" on a textured background; annotations are the blob
/// centers. Deterministic per seed.
std::vector<AnnotatedImage> generate_synthetic(const SyntheticOptions& options);

/// Gaussian smoothing (same size, truncated at 3 sigma, count preserving
/// in the interior). For visualization only; training targets stay sparse.
DensityMap<float> gaussian_smooth(const DensityMap<float>& map,
                                  double sigma = 20.0);

/// Produces the crops of each epoch. The sample stream depends only on the
/// seed and the epoch number, so prefetching the next epoch on a worker
/// thread delivers exactly the single-threaded sequence.
class CropLoader {
 public:
  CropLoader(const std::vector<AnnotatedImage>& images, std::size_t crop_h,
             std::size_t crop_w, std::uint64_t seed, bool prefetch = false);
  CropLoader(const CropLoader&) = delete;
  CropLoader& operator=(const CropLoader&) = delete;

  /// Shuffled crops for `epoch`; epochs must be requested in order when
  /// prefetching.
  std::vector<Sample> epoch(std::size_t epoch);

 private:
  std::vector<Sample> build(std::size_t epoch) const;

  std::vector<AnnotatedImage> images_;
  std::size_t crop_h_, crop_w_;
  std::uint64_t seed_;
  bool prefetch_;
  std::size_t pending_epoch_ = 0;
  std::future<std::vector<Sample>> pending_;
};

/// FNV-1a over the raw bytes of an image tensor.
std::uint64_t image_hash(const Tensor<float>& image);

}  // namespace icc
