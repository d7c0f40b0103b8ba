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

// Reversible integer RGB <-> YUV lifting transform:
//   Y = floor((R + 2G + B) / 4),  U = R - G,  V = B - G
//   G = Y - floor((U + V) / 4),   R = U + G,  B = V + G
// Y stays in [0,255]; U and V need 9 signed bits.

#pragma once

#include <cstdint>

#include "lcfd/errors.hpp"
#include "lcfd/image.hpp"

namespace lcfd {

enum class Channel : uint8_t { kY = 0, kU = 1, kV = 2 };

struct SampleRange {
  int lo;
  int hi;
};

constexpr SampleRange channel_range(Channel c) {
  return c == Channel::kY ? SampleRange{0, 255} : SampleRange{-255, 255};
}

struct YuvImage {
  int width = 0;
  int height = 0;
  IntPlane planes[3];

  IntPlane& plane(Channel c) { return planes[static_cast<int>(c)]; }
  const IntPlane& plane(Channel c) const { return planes[static_cast<int>(c)]; }

  friend bool operator==(const YuvImage&, const YuvImage&) = default;
};

struct Yuv {
  int32_t y, u, v;
  friend bool operator==(const Yuv&, const Yuv&) = default;
};

struct Rgb {
  int32_t r, g, b;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

// `>> 2` on a signed operand is an arithmetic shift (floor division by 4).
constexpr Yuv rct_forward(Rgb p) {
  return {(p.r + 2 * p.g + p.b) >> 2, p.r - p.g, p.b - p.g};
}

constexpr Rgb rct_inverse(Yuv p) {
  const int32_t g = p.y - ((p.u + p.v) >> 2);
  return {p.u + g, g, p.v + g};
}

inline YuvImage rct_forward(const RgbImage& img) {
  YuvImage out;
  out.width = img.width;
  out.height = img.height;
  for (auto& p : out.planes) p = IntPlane(img.width, img.height);
  const size_t n = static_cast<size_t>(img.width) * img.height;
  for (size_t i = 0; i < n; ++i) {
    const Yuv t = rct_forward(Rgb{img.samples[3 * i], img.samples[3 * i + 1],
                                  img.samples[3 * i + 2]});
    out.planes[0].samples[i] = t.y;
    out.planes[1].samples[i] = t.u;
    out.planes[2].samples[i] = t.v;
  }
  return out;
}

inline RgbImage rct_inverse(const YuvImage& yuv) {
  RgbImage out(yuv.width, yuv.height);
  const size_t n = static_cast<size_t>(yuv.width) * yuv.height;
  for (size_t i = 0; i < n; ++i) {
    const Rgb p = rct_inverse(Yuv{yuv.planes[0].samples[i],
                                  yuv.planes[1].samples[i],
                                  yuv.planes[2].samples[i]});
    if (p.r < 0 || p.r > 255 || p.g < 0 || p.g > 255 || p.b < 0 || p.b > 255)
      throw corrupt_error("color transform produced out-of-range RGB sample");
    out.samples[3 * i] = static_cast<uint8_t>(p.r);
    out.samples[3 * i + 1] = static_cast<uint8_t>(p.g);
    out.samples[3 * i + 2] = static_cast<uint8_t>(p.b);
  }
  return out;
}

}  // namespace lcfd
