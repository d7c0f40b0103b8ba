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

// Built-in coder for the initial subimages: LOCO-I median edge detector
// prediction with residuals coded under a two-sided geometric (discrete
// Laplacian) model whose scale is refitted at the start of every row from the
// mean absolute residual seen so far.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "lcfd/colorspace.hpp"
#include "lcfd/entropy/arith.hpp"
#include "lcfd/entropy/cdf.hpp"
#include "lcfd/errors.hpp"
#include "lcfd/image.hpp"

namespace lcfd {

// Codec id stored in the container for this coder.
inline constexpr uint8_t kFallbackMedLaplace = 1;

// a = left, b = up, c = up-left.
constexpr int32_t med_predict(int32_t a, int32_t b, int32_t c) {
  const int32_t mn = std::min(a, b), mx = std::max(a, b);
  if (c >= mx) return mn;
  if (c <= mn) return mx;
  return a + b - c;
}

namespace detail {

inline int32_t causal_prediction(const IntPlane& p, int x, int y, SampleRange r) {
  if (x == 0 && y == 0) return (r.lo + r.hi + 1) / 2;
  if (y == 0) return p.at(x - 1, 0);
  if (x == 0) return p.at(0, y - 1);
  return med_predict(p.at(x - 1, y), p.at(x, y - 1), p.at(x - 1, y - 1));
}

// Quantized two-sided geometric distribution over residuals
// [-(span), +(span)] with mean absolute value ~ `mean_abs`.
inline std::vector<uint32_t> laplace_cdf(double mean_abs, int span) {
  const int C = 2 * span + 1;
  const double theta = std::exp(-1.0 / std::max(mean_abs, 0.05));
  std::vector<double> p(C);
  double total = 0;
  for (int k = 0; k < C; ++k) {
    p[k] = std::pow(theta, std::abs(k - span));
    total += p[k];
  }
  for (auto& v : p) v /= total;
  return quantize_pmf<double>(p);
}

class ResidualModel {
 public:
  explicit ResidualModel(int span) : span_(span) { refit(); }

  const std::vector<uint32_t>& cdf() const { return cdf_; }

  void observe(int32_t residual) {
    sum_abs_ += std::abs(residual);
    ++count_;
  }

  void refit() {
    const double mean = count_ ? static_cast<double>(sum_abs_) / count_ : 8.0;
    cdf_ = laplace_cdf(mean, span_);
  }

 private:
  int span_;
  int64_t sum_abs_ = 0;
  int64_t count_ = 0;
  std::vector<uint32_t> cdf_;
};

}  // namespace detail

// `ideal_bits`, if given, receives the stream's ideal code length.
inline CodedStream fallback_encode(const IntPlane& plane, SampleRange range, double* ideal_bits = nullptr) {
  const int span = range.hi - range.lo;
  for (int32_t v : plane.samples)
    if (v < range.lo || v > range.hi) throw input_error("sample out of channel range");
  detail::ResidualModel model(span);
  ArithmeticEncoder enc;
  for (int y = 0; y < plane.height; ++y) {
    for (int x = 0; x < plane.width; ++x) {
      const int32_t e = plane.at(x, y) - detail::causal_prediction(plane, x, y, range);
      enc.encode(e + span, model.cdf());
      model.observe(e);
    }
    model.refit();
  }
  if (ideal_bits) *ideal_bits = enc.ideal_bits();
  return enc.finish();
}

inline IntPlane fallback_decode(const CodedStream& stream, int width, int height,
                                SampleRange range) {
  const int span = range.hi - range.lo;
  if (stream.symbols != static_cast<uint64_t>(width) * height)
    throw corrupt_error("fallback stream symbol count mismatch");
  IntPlane plane(width, height);
  if (plane.size() == 0) return plane;
  detail::ResidualModel model(span);
  ArithmeticDecoder dec(stream);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const int32_t e = dec.decode(model.cdf()) - span;
      const int32_t v = detail::causal_prediction(plane, x, y, range) + e;
      if (v < range.lo || v > range.hi)
        throw corrupt_error("fallback decode produced out-of-range sample");
      plane.at(x, y) = v;
      model.observe(e);
    }
    model.refit();
  }
  return plane;
}

}  // namespace lcfd
