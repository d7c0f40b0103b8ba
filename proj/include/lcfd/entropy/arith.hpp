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

// Binary-output arithmetic coder with 32-bit registers and 16-bit frequency
// totals. After renormalisation the coding interval always spans more than a
// quarter of the register, so per-symbol truncation costs below 1e-4 bits and
// termination adds at most two bits plus byte padding.

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "lcfd/entropy/cdf.hpp"
#include "lcfd/errors.hpp"

namespace lcfd {

struct CodedStream {
  std::vector<uint8_t> payload;
  uint64_t symbols = 0;
  uint64_t bits = 0;  // meaningful bits in payload (rest is zero padding)

  friend bool operator==(const CodedStream&, const CodedStream&) = default;
};

namespace detail {
inline constexpr uint64_t kTop = 0xFFFFFFFFull;
inline constexpr uint64_t kHalf = 0x80000000ull;
inline constexpr uint64_t kQuarter = 0x40000000ull;
}  // namespace detail

class ArithmeticEncoder {
 public:
  void encode(int32_t symbol, std::span<const uint32_t> cdf) {
    if (symbol < 0 || static_cast<size_t>(symbol) + 1 >= cdf.size())
      throw input_error("symbol index out of range");
    const uint32_t lo = cdf[symbol], hi = cdf[symbol + 1];
    if (hi <= lo || cdf.back() != kCdfTotal)
      throw input_error("invalid cdf row");
    ideal_bits_ += symbol_bits(cdf, symbol);
    const uint64_t range = high_ - low_ + 1;
    high_ = low_ + ((range * hi) >> kCdfBits) - 1;
    low_ = low_ + ((range * lo) >> kCdfBits);
    for (;;) {
      if (high_ < detail::kHalf) {
        emit(0);
      } else if (low_ >= detail::kHalf) {
        emit(1);
        low_ -= detail::kHalf;
        high_ -= detail::kHalf;
      } else if (low_ >= detail::kQuarter && high_ < detail::kHalf + detail::kQuarter) {
        ++pending_;
        low_ -= detail::kQuarter;
        high_ -= detail::kQuarter;
      } else {
        break;
      }
      low_ <<= 1;
      high_ = (high_ << 1) | 1;
    }
    ++count_;
  }

  CodedStream finish() {
    ++pending_;
    emit(low_ < detail::kQuarter ? 0 : 1);
    CodedStream s;
    s.bits = bits_;
    s.symbols = count_;
    s.payload = std::move(out_);
    return s;
  }

  // Sum of -log2(f/65536) over the symbols coded so far.
  double ideal_bits() const { return ideal_bits_; }

 private:
  void put_bit(int b) {
    if ((bits_ & 7) == 0) out_.push_back(0);
    if (b) out_.back() |= static_cast<uint8_t>(0x80u >> (bits_ & 7));
    ++bits_;
  }
  void emit(int b) {
    put_bit(b);
    for (; pending_ > 0; --pending_) put_bit(!b);
  }

  uint64_t low_ = 0, high_ = detail::kTop;
  uint64_t pending_ = 0;
  uint64_t bits_ = 0;
  uint64_t count_ = 0;
  double ideal_bits_ = 0;
  std::vector<uint8_t> out_;
};

// Pull-style decoder: the caller supplies the cdf row for each symbol as it
// goes, so rows may depend on previously decoded symbols.
class ArithmeticDecoder {
 public:
  explicit ArithmeticDecoder(const CodedStream& s) : data_(s.payload), limit_(s.bits) {
    if (s.payload.size() * 8 < s.bits) throw corrupt_error("truncated stream");
    for (int i = 0; i < 32; ++i) value_ = (value_ << 1) | next_bit();
  }

  int32_t decode(std::span<const uint32_t> cdf) {
    if (cdf.size() < 2 || cdf.back() != kCdfTotal) throw input_error("invalid cdf row");
    const uint64_t range = high_ - low_ + 1;
    if (value_ < low_ || value_ > high_) throw corrupt_error("arithmetic decoder range violation");
    const uint64_t target = ((value_ - low_ + 1) * kCdfTotal - 1) / range;
    // Largest s with cdf[s] <= target.
    size_t a = 0, b = cdf.size() - 1;
    while (b - a > 1) {
      const size_t mid = (a + b) / 2;
      if (cdf[mid] <= target) a = mid; else b = mid;
    }
    const auto s = static_cast<int32_t>(a);
    const uint32_t lo = cdf[s], hi = cdf[s + 1];
    if (hi <= lo) throw corrupt_error("arithmetic decoder range violation");
    high_ = low_ + ((range * hi) >> kCdfBits) - 1;
    low_ = low_ + ((range * lo) >> kCdfBits);
    for (;;) {
      if (high_ < detail::kHalf) {
      } else if (low_ >= detail::kHalf) {
        low_ -= detail::kHalf;
        high_ -= detail::kHalf;
        value_ -= detail::kHalf;
      } else if (low_ >= detail::kQuarter && high_ < detail::kHalf + detail::kQuarter) {
        low_ -= detail::kQuarter;
        high_ -= detail::kQuarter;
        value_ -= detail::kQuarter;
      } else {
        break;
      }
      low_ <<= 1;
      high_ = (high_ << 1) | 1;
      value_ = (value_ << 1) | next_bit();
    }
    return s;
  }

 private:
  uint64_t next_bit() {
    const uint64_t i = pos_++;
    if (i >= limit_) return 0;
    return (data_[i >> 3] >> (7 - (i & 7))) & 1u;
  }

  std::span<const uint8_t> data_;
  uint64_t limit_;
  uint64_t pos_ = 0;
  uint64_t low_ = 0, high_ = detail::kTop, value_ = 0;
};

// Codes `symbols` with one cdf row per symbol.
inline CodedStream ac_encode(std::span<const int32_t> symbols,
                             const QuantizedCdfPlane& cdfs) {
  if (cdfs.rows() != symbols.size()) throw input_error("one cdf row per symbol required");
  ArithmeticEncoder enc;
  for (size_t i = 0; i < symbols.size(); ++i) enc.encode(symbols[i], cdfs.row(i));
  return enc.finish();
}

// Decodes `count` symbols; `next_cdf(i)` returns the row for symbol i.
inline std::vector<int32_t> ac_decode(
    const CodedStream& stream,
    const std::function<std::span<const uint32_t>(size_t)>& next_cdf,
    size_t count) {
  if (stream.symbols != count) throw corrupt_error("symbol count mismatch");
  std::vector<int32_t> out;
  out.reserve(count);
  if (count == 0) return out;
  ArithmeticDecoder dec(stream);
  for (size_t i = 0; i < count; ++i) out.push_back(dec.decode(next_cdf(i)));
  return out;
}

}  // namespace lcfd
