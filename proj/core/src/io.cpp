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

#include "icc/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "icc/binary_io.hpp"
#include "icc/error.hpp"

namespace icc {

namespace fs = std::filesystem;

namespace {

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string ppm_token(binary::Reader& in, const std::string& source) {
  std::string tok;
  while (true) {
    char c = static_cast<char>(in.byte());
    if (c == '#') {
      while (static_cast<char>(in.byte()) != '\n') {
      }
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok += c;
    if (tok.size() > 16) throw DataError(source + ": malformed PPM header");
  }
}

std::size_t ppm_number(binary::Reader& in, const std::string& source) {
  const std::string tok = ppm_token(in, source);
  std::size_t v = 0;
  auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
    throw DataError(source + ": bad PPM header field '" + tok + "'");
  }
  return v;
}

}  // namespace

Tensor<float> read_ppm(const fs::path& path) {
  const std::string source = path.string();
  const std::vector<std::byte> bytes = binary::read_file(path);
  binary::Reader in(bytes, source);
  if (ppm_token(in, source) != "P6") {
    throw DataError(source + ": not a binary PPM (P6) image");
  }
  const std::size_t w = ppm_number(in, source);
  const std::size_t h = ppm_number(in, source);
  const std::size_t maxval = ppm_number(in, source);
  if (w == 0 || h == 0 || maxval == 0 || maxval > 65535) {
    throw DataError(source + ": invalid PPM dimensions or maxval");
  }
  // ppm_token consumed exactly one whitespace byte after maxval.
  const std::size_t bps = maxval > 255 ? 2 : 1;
  auto raster = in.bytes(w * h * 3 * bps);
  Tensor<float> image({3, h, w});
  float* d = image.raw();
  const float scale = 1.0f / static_cast<float>(maxval);
  for (std::size_t i = 0; i < w * h; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      const std::size_t at = (i * 3 + c) * bps;
      std::size_t v = static_cast<std::size_t>(raster[at]);
      if (bps == 2) v = (v << 8) | static_cast<std::size_t>(raster[at + 1]);
      d[c * h * w + i] = static_cast<float>(v) * scale;
    }
  }
  return image;
}

void write_ppm(const fs::path& path, const Tensor<float>& image) {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw ShapeError("PPM export expects a [3,H,W] image, got " +
                     shape_to_string(image.shape()));
  }
  const std::size_t h = image.dim(1), w = image.dim(2);
  const std::string header =
      "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  std::vector<std::byte> out;
  out.reserve(header.size() + 3 * h * w);
  for (char c : header) out.push_back(static_cast<std::byte>(c));
  const float* d = image.raw();
  for (std::size_t i = 0; i < h * w; ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      const float v = std::clamp(d[c * h * w + i], 0.0f, 1.0f);
      out.push_back(static_cast<std::byte>(std::lround(v * 255.0f)));
    }
  }
  binary::write_file(path, out);
}

std::vector<Point> read_points(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open annotation file " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "ICCPTS 1") {
    throw DataError(path.string() + ": missing 'ICCPTS 1' header");
  }
  std::vector<Point> points;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    Point p;
    std::string extra;
    if (!(fields >> p.x >> p.y) || (fields >> extra) || !std::isfinite(p.x) ||
        !std::isfinite(p.y)) {
      throw DataError(path.string() + ":" + std::to_string(line_no) +
                      ": expected 'x y'");
    }
    points.push_back(p);
  }
  return points;
}

void write_points(const fs::path& path, const std::vector<Point>& points) {
  std::ostringstream out;
  out.precision(17);
  out << "ICCPTS 1\n";
  for (const Point& p : points) out << p.x << ' ' << p.y << '\n';
  const std::string s = out.str();
  binary::write_file(path, std::as_bytes(std::span(s.data(), s.size())));
}

void write_density(const fs::path& path, const DensityMap<float>& map) {
  if (map.values.size() != map.height * map.width) {
    throw ShapeError("density map size does not match its extents");
  }
  std::vector<std::byte> out;
  out.reserve(16 + 4 * map.values.size());
  for (char c : std::string("ICCD")) out.push_back(static_cast<std::byte>(c));
  binary::append_le<std::uint32_t>(out, kDensityVersion);
  binary::append_le<std::uint32_t>(out, static_cast<std::uint32_t>(map.height));
  binary::append_le<std::uint32_t>(out, static_cast<std::uint32_t>(map.width));
  for (float v : map.values) binary::append_le<float>(out, v);
  binary::write_file(path, out);
}

DensityMap<float> read_density(const fs::path& path) {
  const std::string source = path.string();
  const std::vector<std::byte> bytes = binary::read_file(path);
  binary::Reader in(bytes, source);
  auto magic = in.bytes(4);
  if (std::string(reinterpret_cast<const char*>(magic.data()), 4) != "ICCD") {
    throw DataError(source + ": not a density map (bad magic)");
  }
  const auto version = in.le<std::uint32_t>();
  if (version != kDensityVersion) {
    throw DataError(source + ": unsupported density map version " +
                    std::to_string(version));
  }
  const std::size_t h = in.le<std::uint32_t>();
  const std::size_t w = in.le<std::uint32_t>();
  DensityMap<float> map(h, w);
  for (float& v : map.values) v = in.le<float>();
  if (!in.done()) throw DataError(source + ": trailing bytes after density map");
  return map;
}

void write_density_csv(const fs::path& path, const DensityMap<float>& map) {
  std::ostringstream out;
  out.precision(9);
  for (std::size_t r = 0; r < map.height; ++r) {
    for (std::size_t c = 0; c < map.width; ++c) {
      if (c) out << ',';
      out << map.at(r, c);
    }
    out << '\n';
  }
  const std::string s = out.str();
  binary::write_file(path, std::as_bytes(std::span(s.data(), s.size())));
}

std::vector<AnnotatedImage> load_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) {
    throw DataError("dataset directory " + dir.string() + " does not exist");
  }
  std::map<std::string, std::pair<fs::path, fs::path>> pairs;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const fs::path& p = entry.path();
    if (p.extension() == ".ppm") pairs[p.stem().string()].first = p;
    if (p.extension() == ".pts") pairs[p.stem().string()].second = p;
  }
  std::vector<AnnotatedImage> out;
  for (const auto& [id, files] : pairs) {
    if (files.first.empty() || files.second.empty()) {
      throw DataError("dataset " + dir.string() + ": '" + id +
                      "' lacks its " + (files.first.empty() ? ".ppm" : ".pts") +
                      " file");
    }
    AnnotatedImage img;
    img.id = id;
    img.image = read_ppm(files.first);
    img.points = read_points(files.second);
    img.validate();
    out.push_back(std::move(img));
  }
  return out;
}

void save_dataset(const fs::path& dir, const std::vector<AnnotatedImage>& images) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    throw DataError("cannot create dataset directory " + dir.string() + ": " +
                    ec.message());
  }
  for (const AnnotatedImage& img : images) {
    write_ppm(dir / (img.id + ".ppm"), img.image);
    write_points(dir / (img.id + ".pts"), img.points);
  }
}

}  // namespace icc
