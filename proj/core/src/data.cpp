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

#include "icc/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "icc/error.hpp"

namespace icc {

void AnnotatedImage::validate() const {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw DataError("image '" + id + "' must be [3,H,W], got " +
                    shape_to_string(image.shape()));
  }
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Point& p = points[i];
    if (!(p.x >= 0.0 && p.x < static_cast<double>(width()) && p.y >= 0.0 &&
          p.y < static_cast<double>(height()))) {
      throw DataError("image '" + id + "': point " + std::to_string(i) + " (" +
                      std::to_string(p.x) + ", " + std::to_string(p.y) +
                      ") lies outside " + std::to_string(width()) + "x" +
                      std::to_string(height()));
    }
  }
}

DensityMap<float> rasterize(const std::vector<Point>& points, std::size_t height,
                            std::size_t width, const std::string& id) {
  DensityMap<float> map(height, width, 0.0f, true);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Point& p = points[i];
    if (!(p.x >= 0.0 && p.x < static_cast<double>(width) && p.y >= 0.0 &&
          p.y < static_cast<double>(height))) {
      throw DataError("annotation '" + id + "': point " + std::to_string(i) +
                      " (" + std::to_string(p.x) + ", " + std::to_string(p.y) +
                      ") is outside the " + std::to_string(width) + "x" +
                      std::to_string(height) + " image");
    }
    map.at(static_cast<std::size_t>(p.y), static_cast<std::size_t>(p.x)) += 1.0f;
  }
  return map;
}

DensityMap<float> sum_pool(const DensityMap<float>& map, std::size_t factor) {
  if (factor == 0) throw ConfigError("pooling factor must be positive");
  const std::size_t h = (map.height + factor - 1) / factor;
  const std::size_t w = (map.width + factor - 1) / factor;
  DensityMap<float> out(h, w, 0.0f, map.is_ground_truth);
  // Accumulate in double: the cells hold small integers for ground truth,
  // so the result is exact either way, but predictions are not integers.
  std::vector<double> acc(h * w, 0.0);
  for (std::size_t r = 0; r < map.height; ++r) {
    for (std::size_t c = 0; c < map.width; ++c) {
      acc[(r / factor) * w + c / factor] += map.at(r, c);
    }
  }
  for (std::size_t i = 0; i < acc.size(); ++i) {
    out.values[i] = static_cast<float>(acc[i]);
  }
  return out;
}

Sample crop_at(const AnnotatedImage& image, std::size_t offset_y,
               std::size_t offset_x, std::size_t crop_h, std::size_t crop_w) {
  const std::size_t H = image.height(), W = image.width();
  if (crop_h == 0 || crop_w == 0 || offset_y + crop_h > H ||
      offset_x + crop_w > W) {
    throw ConfigError("crop " + std::to_string(crop_h) + "x" +
                      std::to_string(crop_w) + " at (" +
                      std::to_string(offset_y) + ", " +
                      std::to_string(offset_x) + ") exceeds image '" +
                      image.id + "' of " + std::to_string(H) + "x" +
                      std::to_string(W));
  }
  Sample s;
  s.source_id = image.id;
  s.offset_y = offset_y;
  s.offset_x = offset_x;
  s.image = Tensor<float>({3, crop_h, crop_w});
  const float* src = image.image.raw();
  float* dst = s.image.raw();
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t r = 0; r < crop_h; ++r) {
      std::memcpy(dst + (c * crop_h + r) * crop_w,
                  src + (c * H + offset_y + r) * W + offset_x,
                  crop_w * sizeof(float));
    }
  }
  std::vector<Point> inside;
  const double y0 = static_cast<double>(offset_y);
  const double x0 = static_cast<double>(offset_x);
  for (const Point& p : image.points) {
    const double y = p.y - y0, x = p.x - x0;
    if (y >= 0.0 && y < static_cast<double>(crop_h) && x >= 0.0 &&
        x < static_cast<double>(crop_w)) {
      inside.push_back({x, y});
    }
  }
  s.target = downsample_by_8(rasterize(inside, crop_h, crop_w, image.id));
  return s;
}

Sample random_crop(const AnnotatedImage& image, std::size_t crop_h,
                   std::size_t crop_w, std::mt19937_64& rng) {
  if (crop_h % 8 != 0 || crop_w % 8 != 0) {
    throw ConfigError("crop extents must be multiples of 8");
  }
  if (crop_h > image.height() || crop_w > image.width()) {
    throw ConfigError("crop " + std::to_string(crop_h) + "x" +
                      std::to_string(crop_w) + " is larger than image '" +
                      image.id + "'; pad the image first");
  }
  std::uniform_int_distribution<std::size_t> dy(0, image.height() - crop_h);
  std::uniform_int_distribution<std::size_t> dx(0, image.width() - crop_w);
  const std::size_t oy = dy(rng);
  const std::size_t ox = dx(rng);
  return crop_at(image, oy, ox, crop_h, crop_w);
}

Sample full_sample(const AnnotatedImage& image) {
  return crop_at(image, 0, 0, image.height(), image.width());
}

AnnotatedImage pad_to_at_least(const AnnotatedImage& image, std::size_t h,
                               std::size_t w) {
  const std::size_t H = image.height(), W = image.width();
  if (H >= h && W >= w) return image;
  const std::size_t nh = std::max(H, h), nw = std::max(W, w);
  AnnotatedImage out;
  out.id = image.id;
  out.points = image.points;
  out.image = Tensor<float>({3, nh, nw});
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t r = 0; r < H; ++r) {
      std::memcpy(out.image.raw() + (c * nh + r) * nw,
                  image.image.raw() + (c * H + r) * W, W * sizeof(float));
    }
  }
  return out;
}

namespace {

Tensor<float> per_channel(const Tensor<float>& image, bool forward) {
  std::size_t channel_axis;
  if (image.rank() == 3) {
    channel_axis = 0;
  } else if (image.rank() == 4) {
    channel_axis = 1;
  } else {
    throw ShapeError("expected a [3,H,W] or [N,3,H,W] image, got " +
                     shape_to_string(image.shape()));
  }
  if (image.dim(channel_axis) != 3) {
    throw ShapeError("expected 3 channels, got " +
                     shape_to_string(image.shape()));
  }
  Tensor<float> out = image;
  const std::size_t plane = image.dim(image.rank() - 1) * image.dim(image.rank() - 2);
  const std::size_t batches = image.rank() == 4 ? image.dim(0) : 1;
  float* d = out.raw();
  for (std::size_t n = 0; n < batches; ++n) {
    for (std::size_t c = 0; c < 3; ++c) {
      float* p = d + (n * 3 + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        p[i] = forward ? (p[i] - kChannelMean[c]) / kChannelStd[c]
                       : p[i] * kChannelStd[c] + kChannelMean[c];
      }
    }
  }
  return out;
}

}  // namespace

Tensor<float> normalize(const Tensor<float>& image) {
  return per_channel(image, true);
}

Tensor<float> denormalize(const Tensor<float>& image) {
  return per_channel(image, false);
}

std::vector<AnnotatedImage> generate_synthetic(const SyntheticOptions& o) {
  if (o.min_count > o.max_count) {
    throw ConfigError("synthetic count range is empty");
  }
  if (o.height == 0 || o.width == 0) {
    throw ConfigError("synthetic image extents must be positive");
  }
  if (!(o.blob_sigma > 0)) throw ConfigError("blob sigma must be positive");
  constexpr double kTwoPi = 6.283185307179586;
  std::vector<AnnotatedImage> out;
  out.reserve(o.n_images);
  const std::size_t H = o.height, W = o.width;
  for (std::size_t i = 0; i < o.n_images; ++i) {
    // One generator per image keeps images independent of n_images.
    std::seed_seq seq{static_cast<std::uint32_t>(o.seed),
                      static_cast<std::uint32_t>(o.seed >> 32),
                      static_cast<std::uint32_t>(i), 0x1CCu};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, 0.03);

    AnnotatedImage img;
    img.id = o.id_prefix + "_" + std::to_string(i);
    img.image = Tensor<float>({3, H, W});
    double base[3], tint[3];
    for (double& b : base) b = 0.2 + 0.25 * u01(rng);
    const double fx = kTwoPi * (1.0 + 4.0 * u01(rng)) / static_cast<double>(W);
    const double fy = kTwoPi * (1.0 + 4.0 * u01(rng)) / static_cast<double>(H);
    const double phase_x = kTwoPi * u01(rng), phase_y = kTwoPi * u01(rng);
    std::vector<double> canvas(3 * H * W);
    for (std::size_t r = 0; r < H; ++r) {
      for (std::size_t c = 0; c < W; ++c) {
        const double texture = 0.08 * std::sin(fx * c + phase_x) *
                               std::sin(fy * r + phase_y);
        for (std::size_t ch = 0; ch < 3; ++ch) {
          canvas[(ch * H + r) * W + c] = base[ch] + texture + noise(rng);
        }
      }
    }
    std::uniform_int_distribution<std::size_t> count(o.min_count, o.max_count);
    const std::size_t n = count(rng);
    const int radius = static_cast<int>(std::ceil(3.0 * o.blob_sigma));
    for (std::size_t k = 0; k < n; ++k) {
      Point p{u01(rng) * static_cast<double>(W), u01(rng) * static_cast<double>(H)};
      p.x = std::min(p.x, std::nextafter(static_cast<double>(W), 0.0));
      p.y = std::min(p.y, std::nextafter(static_cast<double>(H), 0.0));
      img.points.push_back(p);
      const double amplitude = 0.45 + 0.25 * u01(rng);
      for (double& t : tint) t = 0.7 + 0.3 * u01(rng);
      const int cr = static_cast<int>(p.y), cc = static_cast<int>(p.x);
      for (int r = std::max(0, cr - radius);
           r <= std::min(static_cast<int>(H) - 1, cr + radius); ++r) {
        for (int c = std::max(0, cc - radius);
             c <= std::min(static_cast<int>(W) - 1, cc + radius); ++c) {
          const double dy = r + 0.5 - p.y, dx = c + 0.5 - p.x;
          const double g = amplitude * std::exp(-(dx * dx + dy * dy) /
                                                (2.0 * o.blob_sigma * o.blob_sigma));
          for (std::size_t ch = 0; ch < 3; ++ch) {
            canvas[(ch * H + r) * W + c] += g * tint[ch];
          }
        }
      }
    }
    float* dst = img.image.raw();
    for (std::size_t j = 0; j < canvas.size(); ++j) {
      dst[j] = static_cast<float>(std::clamp(canvas[j], 0.0, 1.0));
    }
    out.push_back(std::move(img));
  }
  return out;
}

DensityMap<float> gaussian_smooth(const DensityMap<float>& map, double sigma) {
  if (!(sigma > 0)) throw ConfigError("smoothing sigma must be positive");
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double norm = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    norm += kernel[i + radius];
  }
  for (double& k : kernel) k /= norm;
  const int H = static_cast<int>(map.height), W = static_cast<int>(map.width);
  std::vector<double> tmp(map.size(), 0.0);
  for (int r = 0; r < H; ++r) {
    for (int c = 0; c < W; ++c) {
      double s = 0.0;
      for (int k = std::max(-radius, -c); k <= std::min(radius, W - 1 - c); ++k) {
        s += kernel[k + radius] * map.at(r, c + k);
      }
      tmp[r * W + c] = s;
    }
  }
  DensityMap<float> out(map.height, map.width);
  for (int r = 0; r < H; ++r) {
    for (int c = 0; c < W; ++c) {
      double s = 0.0;
      for (int k = std::max(-radius, -r); k <= std::min(radius, H - 1 - r); ++k) {
        s += kernel[k + radius] * tmp[(r + k) * W + c];
      }
      out.at(r, c) = static_cast<float>(s);
    }
  }
  return out;
}

CropLoader::CropLoader(const std::vector<AnnotatedImage>& images,
                       std::size_t crop_h, std::size_t crop_w,
                       std::uint64_t seed, bool prefetch)
    : crop_h_(crop_h), crop_w_(crop_w), seed_(seed), prefetch_(prefetch) {
  if (crop_h == 0 || crop_w == 0 || crop_h % 8 || crop_w % 8) {
    throw ConfigError("crop extents must be positive multiples of 8");
  }
  images_.reserve(images.size());
  for (const AnnotatedImage& img : images) {
    img.validate();
    images_.push_back(pad_to_at_least(img, crop_h, crop_w));
  }
}

std::vector<Sample> CropLoader::build(std::size_t epoch) const {
  std::seed_seq seq{static_cast<std::uint32_t>(seed_),
                    static_cast<std::uint32_t>(seed_ >> 32),
                    static_cast<std::uint32_t>(epoch), 0xC209u};
  std::mt19937_64 rng(seq);
  std::vector<std::size_t> order(images_.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<Sample> out;
  out.reserve(order.size());
  for (std::size_t i : order) {
    out.push_back(random_crop(images_[i], crop_h_, crop_w_, rng));
  }
  return out;
}

std::vector<Sample> CropLoader::epoch(std::size_t epoch) {
  std::vector<Sample> out;
  if (prefetch_ && pending_.valid() && pending_epoch_ == epoch) {
    out = pending_.get();
  } else {
    if (pending_.valid()) pending_.wait();
    out = build(epoch);
  }
  if (prefetch_) {
    pending_epoch_ = epoch + 1;
    pending_ = std::async(std::launch::async,
                          [this, e = epoch + 1] { return build(e); });
  }
  return out;
}

std::uint64_t image_hash(const Tensor<float>& image) {
  std::uint64_t h = 1469598103934665603ull;
  const auto* bytes = reinterpret_cast<const unsigned char*>(image.raw());
  for (std::size_t i = 0; i < image.numel() * sizeof(float); ++i) {
    h ^= bytes[i];
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace icc
