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

#include "icc/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <type_traits>

#include "icc/binary_io.hpp"

namespace icc {
namespace {

constexpr char kMagic[4] = {'I', 'C', 'C', 'W'};

std::size_t dtype_size(DType d) { return d == DType::kFloat32 ? 4 : 8; }

}  // namespace

template <typename T>
CheckpointRecord CheckpointRecord::from_tensor(std::string name,
                                               const Tensor<T>& t) {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  CheckpointRecord r;
  r.name = std::move(name);
  r.dtype = std::is_same_v<T, float> ? DType::kFloat32 : DType::kFloat64;
  r.shape = t.shape();
  r.payload.reserve(t.numel() * sizeof(T));
  for (T v : t.data()) binary::append_le(r.payload, v);
  return r;
}

template <typename T>
Tensor<T> CheckpointRecord::to_tensor() const {
  const std::size_t n = shape_numel(shape);
  if (payload.size() != n * dtype_size(dtype)) {
    throw DataError("checkpoint record '" + name + "' payload size mismatch");
  }
  std::vector<T> values(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (dtype == DType::kFloat32) {
      values[i] = static_cast<T>(binary::read_le<float>(payload.data() + 4 * i));
    } else {
      values[i] =
          static_cast<T>(binary::read_le<double>(payload.data() + 8 * i));
    }
  }
  return Tensor<T>(shape, std::move(values));
}

template CheckpointRecord CheckpointRecord::from_tensor(std::string,
                                                        const Tensor<float>&);
template CheckpointRecord CheckpointRecord::from_tensor(std::string,
                                                        const Tensor<double>&);
template Tensor<float> CheckpointRecord::to_tensor() const;
template Tensor<double> CheckpointRecord::to_tensor() const;

void save_checkpoint(const std::filesystem::path& path,
                     const std::vector<CheckpointRecord>& records) {
  std::vector<std::byte> buf;
  for (char c : kMagic) buf.push_back(static_cast<std::byte>(c));
  binary::append_le(buf, kCheckpointVersion);
  for (const CheckpointRecord& r : records) {
    binary::append_le(buf, static_cast<std::uint32_t>(r.name.size()));
    for (char c : r.name) buf.push_back(static_cast<std::byte>(c));
    buf.push_back(static_cast<std::byte>(r.dtype));
    binary::append_le(buf, static_cast<std::uint32_t>(r.shape.size()));
    for (std::size_t e : r.shape) {
      binary::append_le(buf, static_cast<std::uint64_t>(e));
    }
    if (r.payload.size() != shape_numel(r.shape) * dtype_size(r.dtype)) {
      throw DataError("checkpoint record '" + r.name + "' payload size mismatch");
    }
    buf.insert(buf.end(), r.payload.begin(), r.payload.end());
  }
  binary::write_file(path, buf);
}

std::vector<CheckpointRecord> load_checkpoint(
    const std::filesystem::path& path) {
  const std::vector<std::byte> buf = binary::read_file(path);
  binary::Reader in(buf, path.string());
  for (char c : kMagic) {
    if (in.byte() != static_cast<std::byte>(c)) {
      throw DataError(path.string() + ": not a parameter checkpoint (bad magic)");
    }
  }
  const auto version = in.le<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw DataError(path.string() + ": unsupported checkpoint version " +
                    std::to_string(version));
  }
  std::vector<CheckpointRecord> records;
  while (!in.done()) {
    CheckpointRecord r;
    const auto name_len = in.le<std::uint32_t>();
    const auto name_bytes = in.bytes(name_len);
    r.name.assign(reinterpret_cast<const char*>(name_bytes.data()), name_len);
    const auto tag = static_cast<std::uint8_t>(in.byte());
    if (tag != 1 && tag != 2) {
      throw DataError(path.string() + ": record '" + r.name +
                      "' has unknown dtype tag " + std::to_string(tag));
    }
    r.dtype = static_cast<DType>(tag);
    const auto rank = in.le<std::uint32_t>();
    for (std::uint32_t k = 0; k < rank; ++k) {
      r.shape.push_back(static_cast<std::size_t>(in.le<std::uint64_t>()));
    }
    const auto payload = in.bytes(shape_numel(r.shape) * dtype_size(r.dtype));
    r.payload.assign(payload.begin(), payload.end());
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace icc
