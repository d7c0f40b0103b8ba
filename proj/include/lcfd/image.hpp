// Copyright 2026 The LCFD Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Image containers and the binary PPM/PGM interchange format.

#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "lcfd/errors.hpp"

namespace lcfd {

// Row-major sample grid.
template <typename T>
struct Plane {
  int width = 0;
  int height = 0;
  std::vector<T> samples;

  Plane() = default;
  Plane(int w, int h, T fill = T{})
      : width(w), height(h), samples(static_cast<size_t>(w) * h, fill) {}

  T& at(int x, int y) { return samples[static_cast<size_t>(y) * width + x]; }
  const T& at(int x, int y) const {
    return samples[static_cast<size_t>(y) * width + x];
  }
  size_t size() const { return samples.size(); }

  friend bool operator==(const Plane&, const Plane&) = default;
};

using IntPlane = Plane<int32_t>;

// Interleaved 8-bit RGB.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> samples;

  RgbImage() = default;
  RgbImage(int w, int h)
      : width(w), height(h), samples(static_cast<size_t>(w) * h * 3, 0) {}

  uint8_t& at(int x, int y, int c) {
    return samples[(static_cast<size_t>(y) * width + x) * 3 + c];
  }
  uint8_t at(int x, int y, int c) const {
    return samples[(static_cast<size_t>(y) * width + x) * 3 + c];
  }

  friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

// Real-valued diagnostic map (error variance, masks).
using GrayMap = Plane<double>;

struct Dims {
  int width = 0;
  int height = 0;
  friend bool operator==(const Dims&, const Dims&) = default;
};

namespace detail {

// Reads the next whitespace-delimited header token, skipping '#' comments.
inline std::string pnm_token(std::istream& in) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  return tok;
}

inline int pnm_int(std::istream& in, const std::string& path) {
  const std::string tok = pnm_token(in);
  if (tok.empty() || !std::all_of(tok.begin(), tok.end(),
                                  [](char c) { return std::isdigit(c); }))
    throw input_error(path + ": malformed header");
  try {
    return std::stoi(tok);
  } catch (const std::exception&) {
    throw input_error(path + ": malformed header");
  }
}

}  // namespace detail

// Loads a binary PPM (P6) or PGM (P5). Gray images are replicated to RGB.
inline RgbImage load_image(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw input_error(path + ": cannot open");
  const std::string magic = detail::pnm_token(in);
  if (magic != "P6" && magic != "P5")
    throw input_error(path + ": unsupported format '" + magic + "'");
  const int w = detail::pnm_int(in, path);
  const int h = detail::pnm_int(in, path);
  const int maxval = detail::pnm_int(in, path);
  if (w <= 0 || h <= 0) throw input_error(path + ": malformed header");
  if (maxval > 255) throw input_error(path + ": unsupported sample depth");
  if (maxval <= 0) throw input_error(path + ": malformed header");

  const int channels = magic == "P6" ? 3 : 1;
  std::vector<uint8_t> raw(static_cast<size_t>(w) * h * channels);
  in.read(reinterpret_cast<char*>(raw.data()),
          static_cast<std::streamsize>(raw.size()));
  if (static_cast<size_t>(in.gcount()) != raw.size())
    throw input_error(path + ": truncated pixel data");

  RgbImage img(w, h);
  if (channels == 3) {
    img.samples = std::move(raw);
  } else {
    for (size_t i = 0; i < raw.size(); ++i)
      for (int c = 0; c < 3; ++c) img.samples[i * 3 + c] = raw[i];
  }
  return img;
}

inline void save_ppm(const RgbImage& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw input_error(path + ": cannot write");
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.samples.data()),
            static_cast<std::streamsize>(img.samples.size()));
  if (!out) throw input_error(path + ": write failed");
}

inline void save_pgm(const Plane<uint8_t>& plane, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw input_error(path + ": cannot write");
  out << "P5\n" << plane.width << " " << plane.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(plane.samples.data()),
            static_cast<std::streamsize>(plane.samples.size()));
  if (!out) throw input_error(path + ": write failed");
}

// Replicates the last column/row so both dimensions become even. Returns the
// original dimensions, which the bitstream header records.
inline std::pair<RgbImage, Dims> pad_to_even(const RgbImage& img) {
  const Dims orig{img.width, img.height};
  const int w = img.width + (img.width & 1);
  const int h = img.height + (img.height & 1);
  if (w == img.width && h == img.height) return {img, orig};
  RgbImage out(w, h);
  for (int y = 0; y < h; ++y) {
    const int sy = std::min(y, img.height - 1);
    for (int x = 0; x < w; ++x) {
      const int sx = std::min(x, img.width - 1);
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = img.at(sx, sy, c);
    }
  }
  return {out, orig};
}

inline RgbImage crop(const RgbImage& img, int x0, int y0, int w, int h) {
  if (x0 < 0 || y0 < 0 || w <= 0 || h <= 0 || x0 + w > img.width ||
      y0 + h > img.height)
    throw input_error("crop window outside image");
  RgbImage out(w, h);
  for (int y = 0; y < h; ++y)
    std::copy_n(&img.samples[((static_cast<size_t>(y0) + y) * img.width + x0) * 3],
                static_cast<size_t>(w) * 3, &out.samples[static_cast<size_t>(y) * w * 3]);
  return out;
}

// Random square crops at even offsets, so every patch keeps the a/b/c/d phase
// of the full image.
inline std::vector<RgbImage> extract_patches(const RgbImage& img, int size,
                                             int count, uint64_t seed) {
  if (size <= 0 || size % 2 != 0) throw input_error("patch size must be even");
  if (size > img.width || size > img.height)
    throw input_error("patch larger than image");
  std::mt19937_64 rng(seed);
  const int nx = (img.width - size) / 2 + 1;
  const int ny = (img.height - size) / 2 + 1;
  std::vector<RgbImage> out;
  out.reserve(static_cast<size_t>(std::max(count, 0)));
  for (int i = 0; i < count; ++i) {
    const int x = 2 * static_cast<int>(rng() % static_cast<uint64_t>(nx));
    const int y = 2 * static_cast<int>(rng() % static_cast<uint64_t>(ny));
    out.push_back(crop(img, x, y, size, size));
  }
  return out;
}

// Writes clamp(round(scale * value), 0, 255) as an 8-bit PGM.
inline void dump_gray(const GrayMap& map, const std::string& path,
                      double scale) {
  if (!(scale > 0)) throw input_error("dump scale must be positive");
  Plane<uint8_t> out(map.width, map.height);
  for (size_t i = 0; i < map.size(); ++i) {
    const double v = std::floor(scale * map.samples[i] + 0.5);
    out.samples[i] = static_cast<uint8_t>(std::clamp(v, 0.0, 255.0));
  }
  save_pgm(out, path);
}

struct Corpus {
  std::vector<std::string> names;  // file names, sorted
  std::vector<RgbImage> images;
};

// Every .ppm/.pgm/.pnm file directly inside `dir`, in file-name order.
inline Corpus load_corpus(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw input_error(dir + ": not a directory");
  std::vector<fs::path> paths;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto ext = e.path().extension().string();
    if (e.is_regular_file() && (ext == ".ppm" || ext == ".pgm" || ext == ".pnm")) paths.push_back(e.path());
  }
  std::sort(paths.begin(), paths.end());
  Corpus c;
  for (const auto& p : paths) {
    c.names.push_back(p.filename().string());
    c.images.push_back(load_image(p.string()));
  }
  return c;
}

}  // namespace lcfd
