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

#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "icc/error.hpp"

/// Little-endian byte helpers shared by the binary file formats.
namespace icc::binary {

template <typename T>
void append_le(std::vector<std::byte>& out, T value) {
  std::byte raw[sizeof(T)];
  std::memcpy(raw, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) {
      std::swap(raw[i], raw[sizeof(T) - 1 - i]);
    }
  }
  out.insert(out.end(), raw, raw + sizeof(T));
}

template <typename T>
T read_le(const std::byte* src) {
  std::byte raw[sizeof(T)];
  std::memcpy(raw, src, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) {
      std::swap(raw[i], raw[sizeof(T) - 1 - i]);
    }
  }
  T value;
  std::memcpy(&value, raw, sizeof(T));
  return value;
}

/// Bounds-checked cursor over an in-memory file.
class Reader {
 public:
  Reader(std::span<const std::byte> data, std::string source)
      : data_(data), source_(std::move(source)) {}

  bool done() const noexcept { return pos_ == data_.size(); }

  std::span<const std::byte> bytes(std::size_t n) {
    if (data_.size() - pos_ < n) {
      throw DataError(source_ + ": truncated file");
    }
    auto out = data_.subspan(pos_, n);
    pos_ += n;
    return out;
  }

  std::byte byte() { return bytes(1)[0]; }

  template <typename T>
  T le() {
    return read_le<T>(bytes(sizeof(T)).data());
  }

 private:
  std::span<const std::byte> data_;
  std::size_t pos_ = 0;
  std::string source_;
};

std::vector<std::byte> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path,
                std::span<const std::byte> data);

}  // namespace icc::binary
