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

#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "lcfd/errors.hpp"

namespace lcfd::nn {

// Dense (batch, channels, height, width) array, row-major.
template <typename T>
struct Tensor4 {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<T> data;

  Tensor4() = default;
  Tensor4(int n_, int c_, int h_, int w_, T fill = T(0))
      : n(n_), c(c_), h(h_), w(w_) {
    if (n <= 0 || c <= 0 || h <= 0 || w <= 0)
      throw input_error("tensor dimensions must be positive");
    data.assign(static_cast<size_t>(n) * c * h * w, fill);
  }

  size_t size() const { return data.size(); }
  size_t plane_size() const { return static_cast<size_t>(h) * w; }
  bool empty() const { return data.empty(); }
  std::array<int, 4> dims() const { return {n, c, h, w}; }
  bool same_shape(const Tensor4& o) const { return dims() == o.dims(); }

  T* plane(int b, int ch) {
    return data.data() + (static_cast<size_t>(b) * c + ch) * plane_size();
  }
  const T* plane(int b, int ch) const {
    return data.data() + (static_cast<size_t>(b) * c + ch) * plane_size();
  }
  T& at(int b, int ch, int y, int x) {
    return plane(b, ch)[static_cast<size_t>(y) * w + x];
  }
  T at(int b, int ch, int y, int x) const {
    return plane(b, ch)[static_cast<size_t>(y) * w + x];
  }

  template <typename U>
  Tensor4<U> cast() const {
    Tensor4<U> out;
    out.n = n, out.c = c, out.h = h, out.w = w;
    out.data.assign(data.begin(), data.end());
    return out;
  }
};

inline std::string shape_str(const std::array<int, 4>& d) {
  return "(" + std::to_string(d[0]) + "," + std::to_string(d[1]) + "," +
         std::to_string(d[2]) + "," + std::to_string(d[3]) + ")";
}

}  // namespace lcfd::nn
