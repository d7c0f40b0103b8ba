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

// Decomposition of a YUV image into twelve half-resolution subimages, the
// order in which they are coded, and the causal conditioning stacks.
//
// With 0-based indices, location a holds (even row, even col), b holds
// (even row, odd col), c holds (odd row, even col), d holds (odd row, odd col).

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "lcfd/colorspace.hpp"
#include "lcfd/errors.hpp"
#include "lcfd/image.hpp"

namespace lcfd {

enum class Location : uint8_t { kA = 0, kB = 1, kC = 2, kD = 3 };

struct SubimageId {
  Channel channel;
  Location location;

  friend bool operator==(const SubimageId&, const SubimageId&) = default;

  std::string name() const {
    static constexpr char kCh[] = {'Y', 'U', 'V'};
    static constexpr char kLoc[] = {'a', 'b', 'c', 'd'};
    return std::string("(") + kCh[static_cast<int>(channel)] + "," +
           kLoc[static_cast<int>(location)] + ")";
  }
};

inline constexpr int kNumSubimages = 12;
// Subimages coded by the fallback coder, i.e. the three a-planes.
inline constexpr int kNumInitial = 3;
inline constexpr int kNumNetworkCoded = kNumSubimages - kNumInitial;

// Y -> U -> V within each location; locations in the order a -> d -> b -> c.
constexpr std::array<SubimageId, kNumSubimages> coding_order() {
  constexpr Location kLocs[] = {Location::kA, Location::kD, Location::kB,
                                Location::kC};
  constexpr Channel kChs[] = {Channel::kY, Channel::kU, Channel::kV};
  std::array<SubimageId, kNumSubimages> out{};
  int k = 0;
  for (Location l : kLocs)
    for (Channel c : kChs) out[k++] = SubimageId{c, l};
  return out;
}

// Offset of a location inside each 2x2 cell.
constexpr int location_dx(Location l) {
  return (l == Location::kB || l == Location::kD) ? 1 : 0;
}
constexpr int location_dy(Location l) {
  return (l == Location::kC || l == Location::kD) ? 1 : 0;
}

struct SubimageSet {
  int width = 0;   // full (padded) image width
  int height = 0;  // full (padded) image height
  std::array<std::array<IntPlane, 4>, 3> planes;

  IntPlane& plane(SubimageId id) {
    return planes[static_cast<int>(id.channel)][static_cast<int>(id.location)];
  }
  const IntPlane& plane(SubimageId id) const {
    return planes[static_cast<int>(id.channel)][static_cast<int>(id.location)];
  }
  // Plane at position `k` of coding_order().
  const IntPlane& ordered(int k) const { return plane(coding_order()[k]); }
  IntPlane& ordered(int k) { return plane(coding_order()[k]); }
};

inline SubimageSet split(const YuvImage& yuv) {
  if (yuv.width % 2 != 0 || yuv.height % 2 != 0)
    throw input_error("split requires even dimensions; pad first");
  if (yuv.width < 2 || yuv.height < 2)
    throw input_error("image too small to split");
  SubimageSet set;
  set.width = yuv.width;
  set.height = yuv.height;
  const int hw = yuv.width / 2;
  const int hh = yuv.height / 2;
  for (int c = 0; c < 3; ++c) {
    const IntPlane& src = yuv.planes[c];
    for (int l = 0; l < 4; ++l) {
      const auto loc = static_cast<Location>(l);
      IntPlane dst(hw, hh);
      const int dx = location_dx(loc);
      const int dy = location_dy(loc);
      for (int y = 0; y < hh; ++y)
        for (int x = 0; x < hw; ++x) dst.at(x, y) = src.at(2 * x + dx, 2 * y + dy);
      set.planes[c][l] = std::move(dst);
    }
  }
  return set;
}

inline YuvImage merge(const SubimageSet& set) {
  const int hw = set.width / 2;
  const int hh = set.height / 2;
  for (const auto& ch : set.planes)
    for (const auto& p : ch)
      if (p.width != hw || p.height != hh || p.size() != static_cast<size_t>(hw) * hh)
        throw input_error("inconsistent subimage plane sizes");
  YuvImage out;
  out.width = set.width;
  out.height = set.height;
  for (int c = 0; c < 3; ++c) {
    IntPlane dst(set.width, set.height);
    for (int l = 0; l < 4; ++l) {
      const auto loc = static_cast<Location>(l);
      const IntPlane& src = set.planes[c][l];
      const int dx = location_dx(loc);
      const int dy = location_dy(loc);
      for (int y = 0; y < hh; ++y)
        for (int x = 0; x < hw; ++x) dst.at(2 * x + dx, 2 * y + dy) = src.at(x, y);
    }
    out.planes[c] = std::move(dst);
  }
  return out;
}

// Network input scaling: every channel maps value -> value / 255, so Y lands
// in [0,1] and U/V in [-1,1].
inline constexpr double kInputScale = 1.0 / 255.0;

// Already coded planes 0..index-2 (coding order) used to code plane index-1.
// `index` is the 1-based subimage number N in [2,12].
template <typename T = float>
struct ConditionStack {
  int index = 0;
  std::vector<SubimageId> ids;
  std::vector<Plane<T>> planes;
};

template <typename T = float>
Plane<T> normalize(const IntPlane& p) {
  Plane<T> out(p.width, p.height);
  for (size_t i = 0; i < p.size(); ++i)
    out.samples[i] = static_cast<T>(p.samples[i] * kInputScale);
  return out;
}

template <typename T = float>
ConditionStack<T> condition_stack(const SubimageSet& set, int index) {
  if (index < 2 || index > kNumSubimages)
    throw input_error("subimage index out of range [2,12]");
  ConditionStack<T> out;
  out.index = index;
  for (int k = 0; k < index - 1; ++k) {
    out.ids.push_back(coding_order()[k]);
    out.planes.push_back(normalize<T>(set.ordered(k)));
  }
  return out;
}

// Pads to even size, converts to YUV and splits.
inline SubimageSet subimages_of(const RgbImage& img) {
  return split(rct_forward(pad_to_even(img).first));
}

}  // namespace lcfd
