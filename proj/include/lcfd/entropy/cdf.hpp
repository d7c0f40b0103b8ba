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

// Integer frequency tables with a fixed 16-bit total.

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "lcfd/errors.hpp"

namespace lcfd {

inline constexpr uint32_t kCdfBits = 16;
inline constexpr uint32_t kCdfTotal = 1u << kCdfBits;

// Frequencies f_k = max(1, round(p_k * 65536)), then the difference to 65536 is
// absorbed by the largest-frequency symbols (lowest index first on ties),
// never taking a symbol below 1. `p` is read at p[k * stride].
template <typename T>
void quantize_pmf(const T* p, size_t stride, int C, uint32_t* freq) {
  if (C <= 0 || static_cast<uint64_t>(C) > kCdfTotal)
    throw input_error("symbol count must be in [1, 65536]");
  int64_t total = 0;
  int best = 0;
  for (int k = 0; k < C; ++k) {
    double v = static_cast<double>(p[static_cast<size_t>(k) * stride]);
    if (!(v > 0)) v = 0;  // also maps NaN to 0
    const double q = std::floor(v * kCdfTotal + 0.5);
    const uint32_t f = q < 1 ? 1u : (q > kCdfTotal ? kCdfTotal : static_cast<uint32_t>(q));
    freq[k] = f;
    total += f;
    if (f > freq[best]) best = k;
  }
  int64_t diff = static_cast<int64_t>(kCdfTotal) - total;
  if (diff > 0) {
    freq[best] += static_cast<uint32_t>(diff);
    return;
  }
  while (diff < 0) {
    best = 0;
    for (int k = 1; k < C; ++k)
      if (freq[k] > freq[best]) best = k;
    const int64_t take = std::min<int64_t>(-diff, freq[best] - 1);
    freq[best] -= static_cast<uint32_t>(take);
    diff += take;
  }
}

// cdf[0] = 0, cdf[k+1] = cdf[k] + freq[k], cdf[C] = 65536.
inline void freq_to_cdf(std::span<const uint32_t> freq, uint32_t* cdf) {
  cdf[0] = 0;
  for (size_t k = 0; k < freq.size(); ++k) cdf[k + 1] = cdf[k] + freq[k];
}

// One quantized distribution: returns the C+1 cumulative counts.
template <typename T>
std::vector<uint32_t> quantize_pmf(std::span<const T> p) {
  std::vector<uint32_t> freq(p.size());
  quantize_pmf(p.data(), 1, static_cast<int>(p.size()), freq.data());
  std::vector<uint32_t> cdf(p.size() + 1);
  freq_to_cdf(freq, cdf.data());
  return cdf;
}

// Per-pixel table set, C+1 entries per row.
struct QuantizedCdfPlane {
  int symbols = 0;  // C
  std::vector<uint32_t> cdf;

  size_t rows() const { return symbols ? cdf.size() / (symbols + 1) : 0; }
  std::span<const uint32_t> row(size_t i) const {
    return std::span(cdf).subspan(i * (symbols + 1), symbols + 1);
  }
};

// Quantizes `count` distributions stored column-wise: probability of symbol k
// for column j at probs[k * count + j].
template <typename T>
QuantizedCdfPlane quantize_columns(const T* probs, int C, size_t count) {
  QuantizedCdfPlane out;
  out.symbols = C;
  out.cdf.resize(count * (C + 1));
  std::vector<uint32_t> freq(C);
  for (size_t j = 0; j < count; ++j) {
    quantize_pmf(probs + j, count, C, freq.data());
    freq_to_cdf(freq, out.cdf.data() + j * (C + 1));
  }
  return out;
}

inline double symbol_bits(std::span<const uint32_t> cdf, int32_t s) {
  return -std::log2(static_cast<double>(cdf[s + 1] - cdf[s]) / kCdfTotal);
}

}  // namespace lcfd
