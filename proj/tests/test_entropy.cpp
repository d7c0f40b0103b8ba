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

#include <gtest/gtest.h>

#include <random>

#include "lcfd/colorspace.hpp"
#include "lcfd/entropy/arith.hpp"
#include "lcfd/entropy/cdf.hpp"
#include "lcfd/entropy/fallback.hpp"

namespace lcfd {
namespace {

std::vector<uint32_t> freqs(const std::vector<uint32_t>& cdf) {
  std::vector<uint32_t> f(cdf.size() - 1);
  for (size_t k = 0; k < f.size(); ++k) f[k] = cdf[k + 1] - cdf[k];
  return f;
}

std::vector<double> random_pmf(std::mt19937_64& rng, int C, double peak) {
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> p(C);
  double s = 0;
  for (auto& v : p) s += v = std::pow(u(rng), peak);
  for (auto& v : p) v /= s;
  return p;
}

TEST(QuantizePmf, Uniform) {
  const std::vector<double> p(4, 0.25);
  EXPECT_EQ(freqs(quantize_pmf<double>(p)), (std::vector<uint32_t>{16384, 16384, 16384, 16384}));
}

TEST(QuantizePmf, DegenerateOneHot) {
  const std::vector<double> p = {1, 0, 0};
  EXPECT_EQ(freqs(quantize_pmf<double>(p)), (std::vector<uint32_t>{65534, 1, 1}));
}

TEST(QuantizePmf, ContractOnRandomPmfs) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 2000; ++trial) {
    const int C = 2 + static_cast<int>(rng() % 1100);
    const auto p = random_pmf(rng, C, 1 + (trial % 40));
    const auto cdf = quantize_pmf<double>(p);
    ASSERT_EQ(cdf.front(), 0u);
    ASSERT_EQ(cdf.back(), kCdfTotal);
    for (size_t k = 0; k + 1 < cdf.size(); ++k) ASSERT_GE(cdf[k + 1] - cdf[k], 1u);
  }
}

TEST(QuantizePmf, SurplusTakenFromLargest) {
  // One certain symbol among 700: the 699 floored symbols are paid for by it.
  std::vector<double> p(700, 0.0);
  p[0] = 1.0;
  const auto f = freqs(quantize_pmf<double>(p));
  EXPECT_EQ(f[0], 65536u - 699u);
  std::vector<double> q(3, 1.0 / 3);  // 21845.33 -> 21845 each, deficit 1
  EXPECT_EQ(freqs(quantize_pmf<double>(q)), (std::vector<uint32_t>{21846, 21845, 21845}));
  std::vector<double> r = {0.5, 0.5 - 1e-9, 1e-9, 1e-9};  // 32768, 32768, 1, 1: surplus 2
  EXPECT_EQ(freqs(quantize_pmf<double>(r)), (std::vector<uint32_t>{32766, 32768, 1, 1}));
}

TEST(QuantizePmf, TooManySymbols) {
  std::vector<double> p(65537, 1.0 / 65537);
  EXPECT_THROW(quantize_pmf<double>(p), Error);
}

TEST(QuantizePmf, ColumnsIndependentOfNeighbours) {
  std::mt19937_64 rng(2);
  const int C = 9;
  const size_t n = 5;
  std::vector<float> probs(C * n);
  std::vector<std::vector<float>> cols(n);
  for (size_t j = 0; j < n; ++j) {
    const auto p = random_pmf(rng, C, 3);
    for (int k = 0; k < C; ++k) {
      probs[k * n + j] = static_cast<float>(p[k]);
      cols[j].push_back(static_cast<float>(p[k]));
    }
  }
  const auto plane = quantize_columns(probs.data(), C, n);
  ASSERT_EQ(plane.rows(), n);
  for (size_t j = 0; j < n; ++j) {
    const auto single = quantize_pmf<float>(cols[j]);
    EXPECT_TRUE(std::equal(single.begin(), single.end(), plane.row(j).begin()));
  }
}

// ---------------------------------------------------------------------------

QuantizedCdfPlane repeat_row(const std::vector<uint32_t>& cdf, size_t n) {
  QuantizedCdfPlane p;
  p.symbols = static_cast<int>(cdf.size() - 1);
  for (size_t i = 0; i < n; ++i) p.cdf.insert(p.cdf.end(), cdf.begin(), cdf.end());
  return p;
}

double ideal(const std::vector<int32_t>& s, const QuantizedCdfPlane& c) {
  double b = 0;
  for (size_t i = 0; i < s.size(); ++i) b += symbol_bits(c.row(i), s[i]);
  return b;
}

TEST(ArithmeticCoder, EmptyStream) {
  const CodedStream s = ac_encode({}, QuantizedCdfPlane{3, {}});
  EXPECT_LE(s.payload.size(), 8u);
  EXPECT_EQ(s.symbols, 0u);
  EXPECT_TRUE(ac_decode(s, [](size_t) { return std::span<const uint32_t>(); }, 0).empty());
}

TEST(ArithmeticCoder, HalfProbabilitySymbols) {
  std::mt19937_64 rng(3);
  const std::vector<uint32_t> cdf = {0, 32768, 65536};
  const auto plane = repeat_row(cdf, 100);
  std::vector<int32_t> sym(100);
  for (auto& v : sym) v = static_cast<int32_t>(rng() & 1);
  const CodedStream s = ac_encode(sym, plane);
  EXPECT_LE(s.bits, 100u + 64u);
  EXPECT_LE(s.payload.size() * 8, 100u + 64u + 7u);
  EXPECT_EQ(ac_decode(s, [&](size_t i) { return plane.row(i); }, 100), sym);
}

TEST(ArithmeticCoder, ConcentratedPmf) {
  const std::vector<uint32_t> cdf = {0, 1, 65535, 65536};
  const auto plane = repeat_row(cdf, 1000);
  const std::vector<int32_t> sym(1000, 1);
  const CodedStream s = ac_encode(sym, plane);
  const double ideal_bits = -1000 * std::log2(65534.0 / 65536);
  EXPECT_NEAR(ideal(sym, plane), ideal_bits, 1e-9);
  EXPECT_LE(static_cast<double>(s.bits), ideal_bits + 64);
  EXPECT_LT(s.payload.size() * 8, 100u);
  EXPECT_EQ(ac_decode(s, [&](size_t i) { return plane.row(i); }, 1000), sym);
}

TEST(ArithmeticCoder, RandomRoundTripsWithinBound) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 100000; ++trial) {
    const int C = 2 + static_cast<int>(rng() % 40);
    const size_t n = 1 + rng() % 12;
    QuantizedCdfPlane plane;
    plane.symbols = C;
    std::vector<int32_t> sym(n);
    for (size_t i = 0; i < n; ++i) {
      const auto cdf = quantize_pmf<double>(random_pmf(rng, C, 1 + trial % 7));
      plane.cdf.insert(plane.cdf.end(), cdf.begin(), cdf.end());
      sym[i] = static_cast<int32_t>(rng() % C);
    }
    const CodedStream s = ac_encode(sym, plane);
    ASSERT_LE(static_cast<double>(s.bits), ideal(sym, plane) + 64) << trial;
    ASSERT_EQ(ac_decode(s, [&](size_t i) { return plane.row(i); }, n), sym) << trial;
  }
}

TEST(ArithmeticCoder, LongSkewedStreamBound) {
  std::mt19937_64 rng(5);
  const int C = 1021;
  const size_t n = 20000;
  QuantizedCdfPlane plane;
  plane.symbols = C;
  std::vector<int32_t> sym(n);
  for (size_t i = 0; i < n; ++i) {
    const auto p = random_pmf(rng, C, 30);
    const auto cdf = quantize_pmf<double>(p);
    plane.cdf.insert(plane.cdf.end(), cdf.begin(), cdf.end());
    sym[i] = std::discrete_distribution<int>(p.begin(), p.end())(rng);
  }
  const CodedStream s = ac_encode(sym, plane);
  EXPECT_LE(static_cast<double>(s.bits), ideal(sym, plane) + 64);
  EXPECT_EQ(ac_decode(s, [&](size_t i) { return plane.row(i); }, n), sym);
}

TEST(ArithmeticCoder, TruncatedStreamFails) {
  const std::vector<uint32_t> cdf = {0, 20000, 40000, 65536};
  const auto plane = repeat_row(cdf, 50);
  std::vector<int32_t> sym(50);
  for (size_t i = 0; i < sym.size(); ++i) sym[i] = static_cast<int32_t>(i % 3);
  CodedStream s = ac_encode(sym, plane);
  s.payload.pop_back();
  EXPECT_THROW(ac_decode(s, [&](size_t i) { return plane.row(i); }, 50), Error);
  CodedStream t = ac_encode(sym, plane);
  EXPECT_THROW(ac_decode(t, [&](size_t i) { return plane.row(i); }, 49), Error);
}

TEST(ArithmeticCoder, SymbolOutOfRange) {
  const auto plane = repeat_row({0, 65536}, 1);
  const std::vector<int32_t> sym = {1};
  EXPECT_THROW(ac_encode(sym, plane), Error);
}

// ---------------------------------------------------------------------------

TEST(Fallback, MedRule) {
  EXPECT_EQ(med_predict(10, 20, 5), 20);
  EXPECT_EQ(med_predict(10, 20, 25), 10);
  EXPECT_EQ(med_predict(10, 20, 12), 18);
  // Oracle: MED equals the median of (a, b, a + b - c).
  std::mt19937_64 rng(6);
  for (int i = 0; i < 10000; ++i) {
    int v[3];
    const int a = static_cast<int>(rng() % 511) - 255, b = static_cast<int>(rng() % 511) - 255,
              c = static_cast<int>(rng() % 511) - 255;
    v[0] = a, v[1] = b, v[2] = a + b - c;
    std::sort(v, v + 3);
    ASSERT_EQ(med_predict(a, b, c), v[1]);
  }
}

TEST(Fallback, ConstantPlaneIsTiny) {
  IntPlane p(64, 64, 77);
  const CodedStream s = fallback_encode(p, channel_range(Channel::kY));
  EXPECT_LT(s.payload.size(), 64u * 64 / 20);
  EXPECT_EQ(fallback_decode(s, 64, 64, channel_range(Channel::kY)), p);
}

TEST(Fallback, RandomRoundTrip) {
  std::mt19937_64 rng(7);
  for (Channel ch : {Channel::kY, Channel::kU}) {
    const SampleRange r = channel_range(ch);
    for (int trial = 0; trial < 20; ++trial) {
      const int w = 1 + static_cast<int>(rng() % 40), h = 1 + static_cast<int>(rng() % 40);
      IntPlane p(w, h);
      for (auto& v : p.samples) v = r.lo + static_cast<int32_t>(rng() % (r.hi - r.lo + 1));
      const CodedStream s = fallback_encode(p, r);
      ASSERT_EQ(fallback_decode(s, w, h, r), p);
    }
  }
}

TEST(Fallback, Errors) {
  IntPlane p(2, 2, 300);
  EXPECT_THROW(fallback_encode(p, channel_range(Channel::kY)), Error);
  IntPlane q(4, 4, 3);
  CodedStream s = fallback_encode(q, channel_range(Channel::kY));
  EXPECT_THROW(fallback_decode(s, 4, 5, channel_range(Channel::kY)), Error);
}

}  // namespace
}  // namespace lcfd
