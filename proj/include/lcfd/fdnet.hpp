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

// The per-subimage frequency-decomposition network.
//
// Each of the nine network-coded subimages owns an independent parameter set
// made of two branches:
//
//   branch A  (low-frequency compressor + frequency decomposition)
//     trunk(x_in) -> prediction, error-variance map sigma, threshold tau, pmf
//   branch B  (high-frequency compressor)
//     trunk(x_in, y * m, m) -> prediction, pmf
//
// The trunk is `depth` 3x3 convolutions with leaky-relu. Heads are 1x1
// convolutions, except tau: global mean pool -> linear -> leaky-relu ->
// linear -> softplus. In fine-to-coarse mode branch A codes the
// high-frequency pixels and branch B the low-frequency ones. The no-c2f
// baseline has a single wider branch with prediction and pmf heads only.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "lcfd/colorspace.hpp"
#include "lcfd/errors.hpp"
#include "lcfd/image.hpp"
#include "lcfd/nn/graph.hpp"
#include "lcfd/nn/kernels.hpp"
#include "lcfd/nn/params.hpp"
#include "lcfd/subimage.hpp"

namespace lcfd {

enum class Variant : uint8_t {
  kFull = 0,
  kNoC2f = 1,
  kFixedTau = 2,
  kNoLossMasking = 3,
  kF2c = 4,
};

inline std::string variant_name(Variant v) {
  switch (v) {
    case Variant::kFull: return "full";
    case Variant::kNoC2f: return "no-c2f";
    case Variant::kFixedTau: return "fixed-tau";
    case Variant::kNoLossMasking: return "no-loss-masking";
    case Variant::kF2c: return "f2c";
  }
  return "?";
}

inline Variant parse_variant(const std::string& s) {
  for (int i = 0; i <= 4; ++i)
    if (variant_name(static_cast<Variant>(i)) == s) return static_cast<Variant>(i);
  throw input_error("unknown variant '" + s + "'");
}

// Pre-activation gains of the sigma, tau and pmf heads. They rescale how far
// one optimiser step moves each output.
struct HeadGains {
  float sigma = 8.0f;
  float tau = 8.0f;
  float pmf = 4.0f;
};

struct ArchConfig {
  int width = 32;
  int depth = 4;
  Variant variant = Variant::kFull;
  HeadGains gains;
};

inline constexpr float kPredictionScale = 255.0f;
inline constexpr float kLeakySlope = 0.2f;

// Smallest probability used when measuring code length.
inline constexpr double kPmfFloor = 1.0 / (1 << 20);

inline int symbol_count(Channel c) { return c == Channel::kY ? 511 : 1021; }

// The nine network-coded subimages are indices N = 4..12 (1-based) in coding
// order.
inline constexpr int kFirstNetworkIndex = kNumInitial + 1;

inline SubimageId subimage_of(int index) { return coding_order()[index - 1]; }

inline std::string model_prefix(int index) { return "s" + std::to_string(index); }

// ---------------------------------------------------------------------------
// Parameter construction

namespace detail {

template <typename Rng>
nn::Tensor4<float> uniform_tensor(Rng& rng, int n, int c, int h, int w, double bound) {
  nn::Tensor4<float> t(n, c, h, w);
  std::uniform_real_distribution<double> u(-bound, bound);
  for (auto& v : t.data) v = static_cast<float>(u(rng));
  return t;
}

template <typename Rng>
void add_conv(nn::ParamStore<float>& ps, Rng& rng, const std::string& name, int cout,
              int cin, int k, double bound, float bias = 0.0f) {
  ps.add(name + ".w", uniform_tensor(rng, cout, cin, k, k, bound));
  ps.add(name + ".b", nn::Tensor4<float>(1, cout, 1, 1, bias));
}

template <typename Rng>
void add_trunk(nn::ParamStore<float>& ps, Rng& rng, const std::string& p, int cin,
               int width, int depth) {
  // He-uniform for leaky-relu.
  const double gain = std::sqrt(2.0 / (1.0 + kLeakySlope * kLeakySlope));
  for (int i = 0; i < depth; ++i) {
    const int in = i == 0 ? cin : width;
    add_conv(ps, rng, p + ".conv" + std::to_string(i), width, in, 3,
             gain * std::sqrt(3.0 / (in * 9)));
  }
}

}  // namespace detail

inline int branch_a_inputs(int index) { return index - 1; }
inline int branch_b_inputs(int index) { return index + 1; }

// Trainable scalar count of one subimage model.
inline size_t model_param_count(int index, const ArchConfig& a) {
  const size_t C = symbol_count(subimage_of(index).channel);
  const size_t W = a.width;
  auto trunk = [&](size_t cin) {
    size_t n = 0;
    for (int i = 0; i < a.depth; ++i) n += W * (i == 0 ? cin : W) * 9 + W;
    return n;
  };
  const size_t pred = W + 1, pmf = W * C + C;
  if (a.variant == Variant::kNoC2f) return trunk(branch_a_inputs(index)) + pred + pmf;
  const size_t sigma = W + 1, tau = W * W + W + W + 1;
  return trunk(branch_a_inputs(index)) + pred + sigma + tau + pmf +
         trunk(branch_b_inputs(index)) + pred + pmf;
}

// Width for the single-branch baseline whose parameter count is closest to the
// two-branch model of width `width`.
inline int matched_single_branch_width(int width, int depth) {
  ArchConfig full{width, depth, Variant::kFull, {}};
  size_t target = 0;
  for (int n = kFirstNetworkIndex; n <= kNumSubimages; ++n)
    target += model_param_count(n, full);
  int best = width;
  size_t best_diff = SIZE_MAX;
  for (int w = 1; w <= 8 * width; ++w) {
    ArchConfig single{w, depth, Variant::kNoC2f, {}};
    size_t total = 0;
    for (int n = kFirstNetworkIndex; n <= kNumSubimages; ++n)
      total += model_param_count(n, single);
    const size_t diff = total > target ? total - target : target - total;
    if (diff < best_diff) best_diff = diff, best = w;
  }
  return best;
}

// Architecture record stored as buffer "meta.arch".
inline nn::Tensor4<float> encode_arch(const ArchConfig& a) {
  nn::Tensor4<float> t(1, 1, 1, 7);
  t.data = {1.0f, static_cast<float>(a.width), static_cast<float>(a.depth),
            static_cast<float>(a.variant), a.gains.sigma, a.gains.tau, a.gains.pmf};
  return t;
}

inline ArchConfig decode_arch(const nn::ParamStore<float>& ps) {
  const auto& t = ps.get("meta.arch").value;
  if (t.size() != 7 || t.data[0] != 1.0f) throw corrupt_error("unsupported model architecture record");
  ArchConfig a;
  a.width = static_cast<int>(t.data[1]);
  a.depth = static_cast<int>(t.data[2]);
  const int v = static_cast<int>(t.data[3]);
  if (a.width <= 0 || a.depth <= 0 || v < 0 || v > 4)
    throw corrupt_error("invalid model architecture record");
  a.variant = static_cast<Variant>(v);
  a.gains = {t.data[4], t.data[5], t.data[6]};
  return a;
}

inline nn::ParamStore<float> init_params(const ArchConfig& a, uint64_t seed) {
  std::mt19937_64 rng(seed);
  nn::ParamStore<float> ps;
  ps.add("meta.arch", encode_arch(a), false);
  constexpr double kHeadBound = 0.01;
  for (int n = kFirstNetworkIndex; n <= kNumSubimages; ++n) {
    const Channel ch = subimage_of(n).channel;
    const int C = symbol_count(ch);
    const float pred_bias = ch == Channel::kY ? 0.5f : 0.0f;
    const std::string p = model_prefix(n);
    if (a.variant == Variant::kNoC2f) {
      detail::add_trunk(ps, rng, p + ".net", branch_a_inputs(n), a.width, a.depth);
      detail::add_conv(ps, rng, p + ".net.pred", 1, a.width, 1, kHeadBound, pred_bias);
      detail::add_conv(ps, rng, p + ".net.pmf", C, a.width, 1, kHeadBound);
      continue;
    }
    detail::add_trunk(ps, rng, p + ".a", branch_a_inputs(n), a.width, a.depth);
    detail::add_conv(ps, rng, p + ".a.pred", 1, a.width, 1, kHeadBound, pred_bias);
    detail::add_conv(ps, rng, p + ".a.sigma", 1, a.width, 1, kHeadBound);
    detail::add_conv(ps, rng, p + ".a.tau0", a.width, a.width, 1, std::sqrt(3.0 / a.width));
    detail::add_conv(ps, rng, p + ".a.tau1", 1, a.width, 1, kHeadBound);
    detail::add_conv(ps, rng, p + ".a.pmf", C, a.width, 1, kHeadBound);
    detail::add_trunk(ps, rng, p + ".b", branch_b_inputs(n), a.width, a.depth);
    detail::add_conv(ps, rng, p + ".b.pred", 1, a.width, 1, kHeadBound, pred_bias);
    detail::add_conv(ps, rng, p + ".b.pmf", C, a.width, 1, kHeadBound);
  }
  if (a.variant == Variant::kFixedTau)
    ps.add("meta.fixed_tau", nn::Tensor4<float>(1, 1, 1, kNumNetworkCoded, 1.0f), false);
  return ps;
}

// All weights of the codec: the architecture plus one parameter store.
struct FdnetModel {
  ArchConfig arch;
  nn::ParamStore<float> params;

  static FdnetModel create(const ArchConfig& a, uint64_t seed) {
    return FdnetModel{a, init_params(a, seed)};
  }
  static FdnetModel from_params(nn::ParamStore<float> ps) {
    const ArchConfig a = decode_arch(ps);
    return FdnetModel{a, std::move(ps)};
  }

  bool coarse_to_fine() const { return arch.variant != Variant::kNoC2f; }

  float fixed_tau(int index) const {
    return params.get("meta.fixed_tau").value.data[index - kFirstNetworkIndex];
  }
  void set_fixed_tau(const std::array<float, kNumNetworkCoded>& taus) {
    auto& t = params.get("meta.fixed_tau").value.data;
    std::copy(taus.begin(), taus.end(), t.begin());
  }
};

// ---------------------------------------------------------------------------
// Forward graph pieces (shared by training and inference)

template <typename T>
using Var = typename nn::Graph<T>::Var;

template <typename T, typename PS>
Var<T> conv_layer(nn::Graph<T>& g, PS& ps, const std::string& name, Var<T> x) {
  return g.conv2d(x, g.param(ps.get(name + ".w")), g.param(ps.get(name + ".b")));
}

template <typename T, typename PS>
Var<T> trunk_forward(nn::Graph<T>& g, PS& ps, const std::string& p,
                     Var<T> x, int depth) {
  Var<T> h = x;
  for (int i = 0; i < depth; ++i)
    h = g.leaky_relu(conv_layer(g, ps, p + ".conv" + std::to_string(i), h), T(kLeakySlope));
  return h;
}

template <typename T, typename PS>
Var<T> prediction_head(nn::Graph<T>& g, PS& ps, const std::string& p,
                       Var<T> feat, Channel ch) {
  const SampleRange r = channel_range(ch);
  return g.clamp(g.scale(conv_layer(g, ps, p + ".pred", feat), T(kPredictionScale)),
                 T(r.lo), T(r.hi));
}

template <typename T, typename PS>
Var<T> pmf_logits(nn::Graph<T>& g, PS& ps, const std::string& p,
                  Var<T> feat, const ArchConfig& a) {
  return g.scale(conv_layer(g, ps, p + ".pmf", feat), T(a.gains.pmf));
}

template <typename T>
struct BranchVars {
  Var<T> features = nullptr;
  Var<T> prediction = nullptr;
  Var<T> sigma = nullptr;  // branch A only
  Var<T> tau = nullptr;    // branch A only, (N,1,1,1)
};

// Branch A (or the single no-c2f network). `x_in` is (N, index-1, h, w).
template <typename T, typename PS>
BranchVars<T> branch_a_forward(nn::Graph<T>& g, PS& ps, const ArchConfig& a,
                               int index, Var<T> x_in) {
  const Channel ch = subimage_of(index).channel;
  const std::string p = model_prefix(index) + (a.variant == Variant::kNoC2f ? ".net" : ".a");
  if (x_in->value.c != branch_a_inputs(index)) throw input_error("x_in channel mismatch");
  BranchVars<T> out;
  out.features = trunk_forward(g, ps, p, x_in, a.depth);
  out.prediction = prediction_head(g, ps, p, out.features, ch);
  if (a.variant == Variant::kNoC2f) return out;
  out.sigma = g.softplus(g.scale(conv_layer(g, ps, p + ".sigma", out.features), T(a.gains.sigma)));
  if (a.variant == Variant::kFixedTau) {
    const T t = ps.get("meta.fixed_tau").value.data[index - kFirstNetworkIndex];
    out.tau = g.constant(nn::Tensor4<T>(x_in->value.n, 1, 1, 1, t));
  } else {
    Var<T> pooled = g.global_mean_pool(out.features);
    Var<T> hidden = g.leaky_relu(conv_layer(g, ps, p + ".tau0", pooled), T(kLeakySlope));
    out.tau = g.softplus(g.scale(conv_layer(g, ps, p + ".tau1", hidden), T(a.gains.tau)));
  }
  return out;
}

// Branch B input: x_in, the already coded part of y (normalised, zero
// elsewhere) and the mask itself.
template <typename T, typename PS>
BranchVars<T> branch_b_forward(nn::Graph<T>& g, PS& ps, const ArchConfig& a,
                               int index, Var<T> x_in, Var<T> y_known, Var<T> mask) {
  const Channel ch = subimage_of(index).channel;
  const std::string p = model_prefix(index) + ".b";
  const Var<T> parts[] = {x_in, y_known, mask};
  Var<T> in = g.concat_channels(parts);
  BranchVars<T> out;
  out.features = trunk_forward(g, ps, p, in, a.depth);
  out.prediction = prediction_head(g, ps, p, out.features, ch);
  return out;
}

// ---------------------------------------------------------------------------
// Residual quantisation

inline int32_t round_half_up(double x) { return static_cast<int32_t>(std::floor(x + 0.5)); }

// Snaps to the 1/64 grid with round-half-up.
inline float snap64(float v) {
  return static_cast<float>(std::floor(static_cast<double>(v) * 64.0 + 0.5) / 64.0);
}

// q = round_half_up(prediction - y).
inline int32_t quantize_residual(double prediction, int32_t y) {
  return round_half_up(prediction - y);
}

// y = round_half_up(prediction - q); exact inverse of quantize_residual since
// (prediction - y) - q lies in [-0.5, 0.5).
inline int32_t reconstruct(double prediction, int32_t q) {
  return round_half_up(prediction - q);
}

inline IntPlane quantize_residual(const Plane<float>& prediction, const IntPlane& y) {
  IntPlane q(y.width, y.height);
  for (size_t i = 0; i < y.size(); ++i)
    q.samples[i] = quantize_residual(prediction.samples[i], y.samples[i]);
  return q;
}

inline IntPlane reconstruct(const Plane<float>& prediction, const IntPlane& q, SampleRange r) {
  IntPlane y(q.width, q.height);
  for (size_t i = 0; i < q.size(); ++i) {
    y.samples[i] = reconstruct(prediction.samples[i], q.samples[i]);
    if (y.samples[i] < r.lo || y.samples[i] > r.hi)
      throw corrupt_error("reconstructed sample outside channel range");
  }
  return y;
}

// Low-frequency mask: 1 where sigma <= tau.
using FrequencyMask = Plane<uint8_t>;

inline FrequencyMask make_mask(const Plane<float>& sigma, float tau) {
  FrequencyMask m(sigma.width, sigma.height);
  for (size_t i = 0; i < sigma.size(); ++i) m.samples[i] = sigma.samples[i] <= tau ? 1 : 0;
  return m;
}

inline FrequencyMask complement(const FrequencyMask& m) {
  FrequencyMask out = m;
  for (auto& v : out.samples) v = 1 - v;
  return out;
}

// ---------------------------------------------------------------------------
// Inference (float, no tape)

// Per-pixel distributions over C symbols, stored symbol-major:
// probs[k * pixels + j].
struct PmfPlane {
  int symbols = 0;
  size_t pixels = 0;
  std::vector<float> probs;

  float at(size_t pixel, int symbol) const { return probs[symbol * pixels + pixel]; }
};

inline nn::Tensor4<float> to_tensor(const ConditionStack<float>& s) {
  if (s.planes.empty()) throw input_error("empty condition stack");
  const int w = s.planes[0].width, h = s.planes[0].height;
  nn::Tensor4<float> t(1, static_cast<int>(s.planes.size()), h, w);
  for (size_t c = 0; c < s.planes.size(); ++c) {
    if (s.planes[c].width != w || s.planes[c].height != h)
      throw input_error("condition planes differ in size");
    std::copy(s.planes[c].samples.begin(), s.planes[c].samples.end(), t.plane(0, static_cast<int>(c)));
  }
  return t;
}

inline Plane<float> plane_of(const nn::Tensor4<float>& t, int ch = 0) {
  Plane<float> p(t.w, t.h);
  std::copy_n(t.plane(0, ch), p.size(), p.samples.begin());
  return p;
}

// Evaluated branch without pmf; the pmf is computed lazily per pixel subset.
struct BranchEval {
  std::string prefix;  // parameter prefix of the branch
  int symbols = 0;
  nn::Tensor4<float> features;  // (1, W, h, w)
  Plane<float> prediction;
  Plane<float> sigma;  // branch A only
  float tau = 0;       // branch A only
};

inline BranchEval eval_branch_a(const FdnetModel& m, int index, const nn::Tensor4<float>& x_in) {
  nn::Graph<float> g(false);
  const auto& ps = m.params;
  const auto v = branch_a_forward(g, ps, m.arch, index, g.constant(x_in));
  BranchEval e;
  e.prefix = model_prefix(index) + (m.arch.variant == Variant::kNoC2f ? ".net" : ".a");
  e.symbols = symbol_count(subimage_of(index).channel);
  e.features = v.features->value;
  e.prediction = plane_of(v.prediction->value);
  if (v.sigma) {
    e.sigma = plane_of(v.sigma->value);
    e.tau = v.tau->value.data[0];
  }
  return e;
}

// `y_known` holds the coded pixels of y (normalised), zero elsewhere; `mask`
// marks them.
inline BranchEval eval_branch_b(const FdnetModel& m, int index, const nn::Tensor4<float>& x_in,
                                const nn::Tensor4<float>& y_known, const nn::Tensor4<float>& mask) {
  nn::Graph<float> g(false);
  const auto& ps = m.params;
  const auto v = branch_b_forward(g, ps, m.arch, index, g.constant(x_in), g.constant(y_known),
                                  g.constant(mask));
  BranchEval e;
  e.prefix = model_prefix(index) + ".b";
  e.symbols = symbol_count(subimage_of(index).channel);
  e.features = v.features->value;
  e.prediction = plane_of(v.prediction->value);
  return e;
}

// Softmax pmfs at the listed pixels (raster indices). The result for a pixel
// does not depend on which other pixels are listed.
inline PmfPlane pmf_at(const FdnetModel& m, const BranchEval& e, std::span<const uint32_t> pixels) {
  const int W = e.features.c;
  const size_t P = e.features.plane_size();
  const size_t n = pixels.size();
  PmfPlane out;
  out.symbols = e.symbols;
  out.pixels = n;
  if (n == 0) return out;
  std::vector<float> cols(static_cast<size_t>(W) * n);
  for (int k = 0; k < W; ++k) {
    const float* src = e.features.plane(0, k);
    for (size_t j = 0; j < n; ++j) {
      if (pixels[j] >= P) throw input_error("pixel index out of range");
      cols[k * n + j] = src[pixels[j]];
    }
  }
  const auto& w = m.params.get(e.prefix + ".pmf.w").value;
  const auto& b = m.params.get(e.prefix + ".pmf.b").value;
  if (w.n != e.symbols || w.c != W) throw input_error("pmf head shape mismatch");
  out.probs.resize(static_cast<size_t>(e.symbols) * n);
  nn::kernels::gemm_bias(e.symbols, W, n, w.data.data(), cols.data(), b.data.data(),
                         out.probs.data());
  const float gain = m.arch.gains.pmf;
  for (auto& v : out.probs) v *= gain;
  std::vector<float> scratch(2 * n);
  nn::kernels::softmax_columns(out.probs.data(), e.symbols, n, scratch.data());
  return out;
}

inline std::vector<uint32_t> all_pixels(size_t n) {
  std::vector<uint32_t> v(n);
  for (size_t i = 0; i < n; ++i) v[i] = static_cast<uint32_t>(i);
  return v;
}

struct LfcOutputs {
  Plane<float> prediction;
  Plane<float> sigma;
  float tau = 0;
  PmfPlane pmf;
};

struct HfcOutputs {
  Plane<float> prediction;
  PmfPlane pmf;
};

inline LfcOutputs lfc_forward(const FdnetModel& m, const ConditionStack<float>& x_in) {
  if (!m.coarse_to_fine()) throw input_error("model has no frequency decomposition branch");
  const BranchEval e = eval_branch_a(m, x_in.index, to_tensor(x_in));
  LfcOutputs out;
  out.prediction = e.prediction;
  out.sigma = e.sigma;
  out.tau = e.tau;
  out.pmf = pmf_at(m, e, all_pixels(e.prediction.size()));
  return out;
}

// `y` is the current subimage; only its pixels under `mask_low` are used.
inline HfcOutputs hfc_forward(const FdnetModel& m, const ConditionStack<float>& x_in,
                              const IntPlane& y, const FrequencyMask& mask_low) {
  if (!m.coarse_to_fine()) throw input_error("model has no high-frequency branch");
  const nn::Tensor4<float> xt = to_tensor(x_in);
  nn::Tensor4<float> known(1, 1, xt.h, xt.w), mk(1, 1, xt.h, xt.w);
  if (y.width != xt.w || y.height != xt.h || mask_low.width != xt.w || mask_low.height != xt.h)
    throw input_error("hfc input size mismatch");
  for (size_t i = 0; i < y.size(); ++i) {
    mk.data[i] = mask_low.samples[i];
    known.data[i] = mask_low.samples[i] ? static_cast<float>(y.samples[i] * kInputScale) : 0.0f;
  }
  const BranchEval e = eval_branch_b(m, x_in.index, xt, known, mk);
  HfcOutputs out;
  out.prediction = e.prediction;
  out.pmf = pmf_at(m, e, all_pixels(e.prediction.size()));
  return out;
}

}  // namespace lcfd
