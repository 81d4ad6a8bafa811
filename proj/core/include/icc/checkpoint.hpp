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
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "icc/tensor.hpp"

namespace icc {

enum class DType : std::uint8_t { kFloat32 = 1, kFloat64 = 2 };

/// One named tensor in a parameter checkpoint. The payload holds the raw
/// little-endian element bytes so a save/load cycle is bit-exact.
struct CheckpointRecord {
  std::string name;
  DType dtype = DType::kFloat32;
  Shape shape;
  std::vector<std::byte> payload;

  template <typename T>
  static CheckpointRecord from_tensor(std::string name, const Tensor<T>& t);

  /// Decodes the payload, converting between float widths if needed.
  template <typename T>
  Tensor<T> to_tensor() const;

  bool operator==(const CheckpointRecord&) const = default;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Writes "ICCW", a u32 version, then one record per tensor:
/// u32 name length, name bytes, u8 dtype, u32 rank, u64 extents, values.
void save_checkpoint(const std::filesystem::path& path,
                     const std::vector<CheckpointRecord>& records);

std::vector<CheckpointRecord> load_checkpoint(const std::filesystem::path& path);

}  // namespace icc
