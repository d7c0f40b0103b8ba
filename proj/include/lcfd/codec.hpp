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

// Lossless image codec: container format, encoder and decoder.
//
// Container (little-endian):
//   "LCFD" | u16 version | u32 width | u32 height | u32 padded width |
//   u32 padded height | 32-byte model hash | u8 fallback codec id | u8 flags
// then one section per subimage in coding order. An a-plane section is one
// framed stream; a network-coded section is the stream of the region coded
// first (branch A) followed by the stream of the rest (branch B), plus two
// u64 hashes (mask, predictions) when the debug flag is set. A framed stream
// is u64 symbol count | u64 byte length | payload.

#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lcfd/bytes.hpp"
#include "lcfd/colorspace.hpp"
#include "lcfd/entropy/arith.hpp"
#include "lcfd/entropy/cdf.hpp"
#include "lcfd/entropy/fallback.hpp"
#include "lcfd/errors.hpp"
#include "lcfd/fdnet.hpp"
#include "lcfd/image.hpp"
#include "lcfd/nn/checkpoint.hpp"
#include "lcfd/subimage.hpp"

namespace lcfd {

inline constexpr char kContainerMagic[] = "LCFD";
inline constexpr uint16_t kContainerVersion = 1;
inline constexpr size_t kHeaderBytes = 4 + 2 + 4 * 4 + 32 + 1 + 1;
inline constexpr uint8_t kFlagDebugHashes = 1;
inline constexpr size_t kStreamFraming = 16;

// Content hash of a weight set: the hash stored in its checkpoint file.
inline Hash256 model_hash(const nn::ParamStore<float>& params) {
  const auto bytes = nn::serialize_checkpoint(params);
  Hash256 h;
  std::copy(bytes.end() - 32, bytes.end(), h.begin());
  return h;
}

struct ContainerHeader {
  uint16_t version = kContainerVersion;
  Dims original;
  Dims padded;
  Hash256 model{};
  uint8_t fallback = kFallbackMedLaplace;
  uint8_t flags = 0;

  bool debug_hashes() const { return flags & kFlagDebugHashes; }
};

struct EncodeOptions {
  bool debug_hashes = false;
};

// Per-subimage accounting of one encode.
struct SectionReport {
  SubimageId id{};
  bool network = false;
  uint64_t bytes = 0;                  // whole section, framing included
  std::array<uint64_t, 2> stream_bytes{};  // framed, per stream
  std::array<uint64_t, 2> symbols{};   // first / second region
  std::array<uint64_t, 2> payload_bits{};
  std::array<double, 2> ideal_bits{};    // under the quantized cdfs
  std::array<double, 2> entropy_bits{};  // under the real-valued pmfs
  uint64_t low_count = 0;  // pixels with sigma <= tau (all, for single-branch models)
  double tau = 0;
  double mean_sigma = 0;
  uint64_t mask_hash = 0;
  uint64_t prediction_hash = 0;

  uint64_t pixels() const { return symbols[0] + symbols[1]; }
  double low_ratio() const { return pixels() ? static_cast<double>(low_count) / pixels() : 0.0; }
};

struct EncodeReport {
  ContainerHeader header;
  uint64_t total_bytes = 0;
  std::array<SectionReport, kNumSubimages> sections{};
  // Framed stream bits by region: low-frequency pixels, high-frequency pixels,
  // and the fallback-coded a-planes. Together with the header (and debug
  // hashes) they account for every container bit.
  uint64_t low_bits = 0, high_bits = 0, fallback_bits = 0, hash_bits = 0;

  double pixels() const { return static_cast<double>(header.original.width) * header.original.height; }
  double bpp() const { return 8.0 * total_bytes / pixels(); }
  // Network-coded subimages only, payload bits (no framing).
  double network_payload_bits() const {
    double s = 0;
    for (const auto& r : sections)
      if (r.network) s += static_cast<double>(r.payload_bits[0] + r.payload_bits[1]);
    return s;
  }
  double network_entropy_bits() const {
    double s = 0;
    for (const auto& r : sections)
      if (r.network) s += r.entropy_bits[0] + r.entropy_bits[1];
    return s;
  }
};

struct Encoded {
  std::vector<uint8_t> bytes;
  EncodeReport report;
};

// Bits per pixel of a container.
inline double measure_bpp(uint64_t container_bytes, Dims original) {
  return 8.0 * static_cast<double>(container_bytes) /
         (static_cast<double>(original.width) * original.height);
}

namespace detail {

inline constexpr size_t kPmfChunk = 2048;

// Snapped branch outputs that steer coding decisions.
inline void snap_plane(Plane<float>& p) {
  for (auto& v : p.samples) v = snap64(v);
}

inline uint64_t hash_mask(const FrequencyMask& m) { return fnv1a(m.samples); }

inline uint64_t hash_predictions(const Plane<float>& a, const Plane<float>* b) {
  auto bytes_of = [](const Plane<float>& p) {
    return std::span(reinterpret_cast<const uint8_t*>(p.samples.data()), p.samples.size() * sizeof(float));
  };
  uint64_t h = fnv1a(bytes_of(a));
  return b ? fnv1a(bytes_of(*b), h) : h;
}

// Calls f(j, cdf_row, probs, stride) for each listed pixel in order, computing
// pmfs a chunk at a time.
template <typename F>
void for_each_cdf(const FdnetModel& m, const BranchEval& e, std::span<const uint32_t> pixels, F&& f) {
  std::vector<uint32_t> freq(e.symbols), cdf(e.symbols + 1);
  for (size_t start = 0; start < pixels.size(); start += kPmfChunk) {
    const size_t n = std::min(kPmfChunk, pixels.size() - start);
    const PmfPlane pmf = pmf_at(m, e, pixels.subspan(start, n));
    for (size_t j = 0; j < n; ++j) {
      quantize_pmf(pmf.probs.data() + j, n, e.symbols, freq.data());
      freq_to_cdf(freq, cdf.data());
      f(start + j, std::span<const uint32_t>(cdf), pmf.probs.data() + j, n);
    }
  }
}

struct StreamStats {
  CodedStream stream;
  double ideal_bits = 0;
  double entropy_bits = 0;
};

// Codes y at `pixels` against the branch's pmfs around its prediction.
inline StreamStats encode_region(const FdnetModel& m, const BranchEval& e, const Plane<float>& prediction,
                                 const IntPlane& y, std::span<const uint32_t> pixels) {
  const int mid = (e.symbols - 1) / 2;
  ArithmeticEncoder enc;
  double entropy = 0;
  for_each_cdf(m, e, pixels, [&](size_t j, std::span<const uint32_t> cdf, const float* p, size_t stride) {
    const uint32_t i = pixels[j];
    const int32_t s = quantize_residual(prediction.samples[i], y.samples[i]) + mid;
    if (s < 0 || s >= e.symbols) throw input_error("residual outside symbol alphabet");
    entropy -= std::log2(std::max<double>(p[static_cast<size_t>(s) * stride], kPmfFloor));
    enc.encode(s, cdf);
  });
  StreamStats out;
  out.ideal_bits = enc.ideal_bits();
  out.entropy_bits = entropy;
  out.stream = enc.finish();
  return out;
}

// Inverse of encode_region; writes the decoded samples into y.
inline void decode_region(const FdnetModel& m, const BranchEval& e, const Plane<float>& prediction,
                          const CodedStream& stream, std::span<const uint32_t> pixels, SampleRange r,
                          IntPlane& y) {
  if (stream.symbols != pixels.size()) throw corrupt_error("symbol count does not match the mask");
  if (pixels.empty()) return;
  const int mid = (e.symbols - 1) / 2;
  ArithmeticDecoder dec(stream);
  for_each_cdf(m, e, pixels, [&](size_t j, std::span<const uint32_t> cdf, const float*, size_t) {
    const uint32_t i = pixels[j];
    const int32_t v = reconstruct(prediction.samples[i], dec.decode(cdf) - mid);
    if (v < r.lo || v > r.hi) throw corrupt_error("reconstructed sample outside channel range");
    y.samples[i] = v;
  });
}

inline void write_stream(ByteWriter& w, const CodedStream& s) {
  w.u64(s.symbols);
  w.u64(s.payload.size());
  w.bytes(s.payload);
}

inline CodedStream read_stream(ByteReader& r, uint64_t max_symbols) {
  CodedStream s;
  s.symbols = r.u64();
  const uint64_t len = r.u64();
  if (s.symbols > max_symbols) throw corrupt_error("stream declares too many symbols");
  if (len > r.remaining()) throw corrupt_error("stream payload truncated");
  const auto p = r.bytes(len);
  s.payload.assign(p.begin(), p.end());
  s.bits = 8 * len;
  return s;
}

inline void write_header(ByteWriter& w, const ContainerHeader& h) {
  w.str(std::string(kContainerMagic, 4));
  w.u16(h.version);
  w.u32(static_cast<uint32_t>(h.original.width));
  w.u32(static_cast<uint32_t>(h.original.height));
  w.u32(static_cast<uint32_t>(h.padded.width));
  w.u32(static_cast<uint32_t>(h.padded.height));
  w.bytes(h.model);
  w.u8(h.fallback);
  w.u8(h.flags);
}

// Pixels of the region coded first, and of the rest, in raster order.
struct RegionSplit {
  std::vector<uint32_t> first, second;
};

inline RegionSplit split_regions(const FrequencyMask& low, bool fine_first) {
  RegionSplit s;
  for (uint32_t i = 0; i < low.size(); ++i) ((low.samples[i] != 0) != fine_first ? s.first : s.second).push_back(i);
  return s;
}

// Everything the decoder can derive for a network-coded subimage before
// reading its first stream.
struct FirstPass {
  BranchEval a;
  FrequencyMask low;
  RegionSplit regions;
};

inline FirstPass first_pass(const FdnetModel& m, const SubimageSet& set, int index) {
  FirstPass fp;
  fp.a = eval_branch_a(m, index, to_tensor(condition_stack<float>(set, index)));
  snap_plane(fp.a.prediction);
  const IntPlane& ref = set.ordered(index - 1);
  if (m.coarse_to_fine()) {
    snap_plane(fp.a.sigma);
    fp.a.tau = snap64(fp.a.tau);
    fp.low = make_mask(fp.a.sigma, fp.a.tau);
  } else {
    fp.low = FrequencyMask(ref.width, ref.height, 1);
  }
  fp.regions = split_regions(fp.low, m.arch.variant == Variant::kF2c);
  return fp;
}

inline BranchEval second_pass(const FdnetModel& m, const SubimageSet& set, int index, const IntPlane& y,
                              const RegionSplit& regions) {
  const nn::Tensor4<float> x_in = to_tensor(condition_stack<float>(set, index));
  nn::Tensor4<float> known(1, 1, y.height, y.width), mk(1, 1, y.height, y.width);
  for (uint32_t i : regions.first) {
    mk.data[i] = 1;
    known.data[i] = static_cast<float>(y.samples[i] * kInputScale);
  }
  BranchEval b = eval_branch_b(m, index, x_in, known, mk);
  snap_plane(b.prediction);
  return b;
}

}  // namespace detail

inline Encoded encode_image(const RgbImage& img, const FdnetModel& m, const EncodeOptions& opt = {}) {
  if (img.width <= 0 || img.height <= 0) throw input_error("empty image");
  if (img.samples.size() != static_cast<size_t>(img.width) * img.height * 3)
    throw input_error("image sample count does not match its dimensions");
  const SubimageSet set = subimages_of(img);

  Encoded out;
  EncodeReport& rep = out.report;
  rep.header.original = {img.width, img.height};
  rep.header.padded = {set.width, set.height};
  rep.header.model = model_hash(m.params);
  rep.header.flags = opt.debug_hashes ? kFlagDebugHashes : 0;

  ByteWriter w;
  detail::write_header(w, rep.header);
  for (int k = 0; k < kNumSubimages; ++k) {
    const size_t start = w.size();
    SectionReport& sr = rep.sections[k];
    sr.id = coding_order()[k];
    const IntPlane& y = set.ordered(k);
    const SampleRange range = channel_range(sr.id.channel);
    if (k < kNumInitial) {
      const CodedStream s = fallback_encode(y, range, &sr.ideal_bits[0]);
      detail::write_stream(w, s);
      sr.symbols[0] = s.symbols;
      sr.payload_bits[0] = s.bits;
      sr.stream_bytes[0] = kStreamFraming + s.payload.size();
      sr.low_count = s.symbols;
      rep.fallback_bits += 8 * sr.stream_bytes[0];
    } else {
      sr.network = true;
      const int index = k + 1;
      const detail::FirstPass fp = detail::first_pass(m, set, index);
      std::array<detail::StreamStats, 2> st;
      st[0] = detail::encode_region(m, fp.a, fp.a.prediction, y, fp.regions.first);
      const Plane<float>* pred_b = nullptr;
      BranchEval b;
      if (m.coarse_to_fine()) {
        b = detail::second_pass(m, set, index, y, fp.regions);
        pred_b = &b.prediction;
        st[1] = detail::encode_region(m, b, b.prediction, y, fp.regions.second);
      } else {
        st[1].stream = ArithmeticEncoder().finish();
      }
      const bool fine_first = m.arch.variant == Variant::kF2c;
      for (int r = 0; r < 2; ++r) {
        detail::write_stream(w, st[r].stream);
        sr.symbols[r] = st[r].stream.symbols;
        sr.payload_bits[r] = st[r].stream.bits;
        sr.ideal_bits[r] = st[r].ideal_bits;
        sr.entropy_bits[r] = st[r].entropy_bits;
        sr.stream_bytes[r] = kStreamFraming + st[r].stream.payload.size();
        // The region coded first is the low-frequency one unless fine-first.
        const bool is_low = (r == 0) != fine_first || !m.coarse_to_fine();
        (is_low ? rep.low_bits : rep.high_bits) += 8 * sr.stream_bytes[r];
      }
      sr.low_count = std::accumulate(fp.low.samples.begin(), fp.low.samples.end(), uint64_t{0});
      if (m.coarse_to_fine()) {
        sr.tau = fp.a.tau;
        sr.mean_sigma = std::accumulate(fp.a.sigma.samples.begin(), fp.a.sigma.samples.end(), 0.0) /
                        static_cast<double>(y.size());
      }
      sr.mask_hash = detail::hash_mask(fp.low);
      sr.prediction_hash = detail::hash_predictions(fp.a.prediction, pred_b);
      if (opt.debug_hashes) {
        w.u64(sr.mask_hash);
        w.u64(sr.prediction_hash);
        rep.hash_bits += 128;
      }
    }
    sr.bytes = w.size() - start;
  }
  rep.total_bytes = w.size();
  out.bytes = w.take();
  return out;
}

// Result of decoding as many sections as the data allows.
struct PartialDecode {
  ContainerHeader header;
  SubimageSet set;       // planes of decoded sections are filled in
  int sections = 0;      // leading sections decoded
  std::array<FrequencyMask, kNumSubimages> low_masks;  // network-coded sections
  std::optional<StreamError> error;

  bool complete() const { return sections == kNumSubimages; }
};

inline ContainerHeader parse_header(ByteReader& r) {
  ContainerHeader h;
  try {
    const auto magic = r.bytes(4);
    if (std::string(magic.begin(), magic.end()) != std::string(kContainerMagic, 4))
      throw corrupt_error("not an LCFD container");
    h.version = r.u16();
    if (h.version != kContainerVersion)
      throw corrupt_error("unsupported container version " + std::to_string(h.version));
    h.original = {static_cast<int>(r.u32()), static_cast<int>(r.u32())};
    h.padded = {static_cast<int>(r.u32()), static_cast<int>(r.u32())};
    const auto mh = r.bytes(32);
    std::copy(mh.begin(), mh.end(), h.model.begin());
    h.fallback = r.u8();
    h.flags = r.u8();
  } catch (const StreamError&) {
    throw;
  } catch (const Error& e) {
    throw corrupt_error(std::string("header: ") + e.what());
  }
  const auto& o = h.original;
  if (o.width <= 0 || o.height <= 0 || o.width > (1 << 24) || o.height > (1 << 24) ||
      h.padded.width != o.width + (o.width & 1) || h.padded.height != o.height + (o.height & 1))
    throw corrupt_error("header: invalid dimensions");
  if (h.fallback != kFallbackMedLaplace)
    throw corrupt_error("header: unknown fallback codec id " + std::to_string(h.fallback));
  if (h.flags & ~kFlagDebugHashes) throw corrupt_error("header: unknown flags");
  return h;
}

// Decodes sections in order and stops at the first damaged one. Header
// problems and a model mismatch throw; section problems are returned.
inline PartialDecode decode_sections(std::span<const uint8_t> bytes, const FdnetModel& m) {
  ByteReader r(bytes);
  PartialDecode out;
  out.header = parse_header(r);
  if (out.header.model != model_hash(m.params))
    throw Error(ErrorKind::kModelMismatch, "container was encoded with a different model (" +
                                              hex(std::span(out.header.model).first(8)) + "...)");
  SubimageSet& set = out.set;
  set.width = out.header.padded.width;
  set.height = out.header.padded.height;
  const int hw = set.width / 2, hh = set.height / 2;
  const uint64_t P = static_cast<uint64_t>(hw) * hh;
  for (auto& ch : set.planes)
    for (auto& p : ch) p = IntPlane(hw, hh);

  for (int k = 0; k < kNumSubimages; ++k) {
    const SubimageId id = coding_order()[k];
    const SampleRange range = channel_range(id.channel);
    try {
      IntPlane& y = set.ordered(k);
      if (k < kNumInitial) {
        y = fallback_decode(detail::read_stream(r, P), hw, hh, range);
      } else {
        const int index = k + 1;
        const CodedStream s0 = detail::read_stream(r, P);
        const CodedStream s1 = detail::read_stream(r, P);
        const detail::FirstPass fp = detail::first_pass(m, set, index);
        detail::decode_region(m, fp.a, fp.a.prediction, s0, fp.regions.first, range, y);
        const Plane<float>* pred_b = nullptr;
        BranchEval b;
        if (m.coarse_to_fine()) {
          b = detail::second_pass(m, set, index, y, fp.regions);
          pred_b = &b.prediction;
          detail::decode_region(m, b, b.prediction, s1, fp.regions.second, range, y);
        } else if (s1.symbols != 0) {
          throw corrupt_error("single-branch section with a second stream");
        }
        if (out.header.debug_hashes()) {
          const uint64_t mh = r.u64(), ph = r.u64();
          if (mh != detail::hash_mask(fp.low)) throw corrupt_error("mask hash differs from the encoder's");
          if (ph != detail::hash_predictions(fp.a.prediction, pred_b))
            throw corrupt_error("prediction hash differs from the encoder's");
        }
        out.low_masks[k] = fp.low;
      }
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::kModelMismatch) throw;
      out.error.emplace(k, id.name(), e.what());
      return out;
    }
    out.sections = k + 1;
  }
  if (r.remaining() != 0) out.error.emplace(kNumSubimages - 1, coding_order().back().name(), "trailing bytes after the last section");
  return out;
}

inline RgbImage decode_image(std::span<const uint8_t> bytes, const FdnetModel& m) {
  PartialDecode d = decode_sections(bytes, m);
  if (d.error) throw *d.error;
  const RgbImage full = rct_inverse(merge(d.set));
  if (full.width == d.header.original.width && full.height == d.header.original.height) return full;
  return crop(full, 0, 0, d.header.original.width, d.header.original.height);
}

// Error-variance map, low-frequency mask and threshold of one subimage,
// exactly as the coder sees them.
struct SubimageView {
  int index = 0;
  Plane<float> sigma;
  FrequencyMask low;
  float tau = 0;
};

inline std::vector<SubimageView> inspect_image(const RgbImage& img, const FdnetModel& m) {
  if (!m.coarse_to_fine()) throw input_error("model has no frequency decomposition");
  const SubimageSet set = subimages_of(img);
  std::vector<SubimageView> out;
  for (int index = kFirstNetworkIndex; index <= kNumSubimages; ++index) {
    detail::FirstPass fp = detail::first_pass(m, set, index);
    out.push_back({index, std::move(fp.a.sigma), std::move(fp.low), fp.a.tau});
  }
  return out;
}

}  // namespace lcfd
