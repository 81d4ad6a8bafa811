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

#include <filesystem>
#include <string>
#include <vector>

#include "icc/data.hpp"
#include "icc/dmcount.hpp"
#include "icc/tensor.hpp"

namespace icc {

/// Binary PPM (P6), maxval up to 65535. Returns [3,H,W] in [0,1].
Tensor<float> read_ppm(const std::filesystem::path& path);
/// Writes a [3,H,W] image with values clamped to [0,1] as 8-bit P6.
void write_ppm(const std::filesystem::path& path, const Tensor<float>& image);

/// Point annotations: a header line "ICCPTS 1", then one "x y" pair per line.
std::vector<Point> read_points(const std::filesystem::path& path);
void write_points(const std::filesystem::path& path,
                  const std::vector<Point>& points);

inline constexpr std::uint32_t kDensityVersion = 1;
/// "ICCD", u32 version, u32 height, u32 width, then row-major little-endian
/// float32 values.
void write_density(const std::filesystem::path& path,
                   const DensityMap<float>& map);
DensityMap<float> read_density(const std::filesystem::path& path);
/// One CSV row per map row, values printed with round-trip precision.
void write_density_csv(const std::filesystem::path& path,
                       const DensityMap<float>& map);

/// A dataset directory holds <id>.ppm and <id>.pts pairs; images are
/// returned sorted by id. Throws DataError for unpaired files.
std::vector<AnnotatedImage> load_dataset(const std::filesystem::path& dir);
void save_dataset(const std::filesystem::path& dir,
                  const std::vector<AnnotatedImage>& images);

}  // namespace icc
