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

// Losses, the training loop and the ablation-variant switches.
//
// Per subimage model, with y and predictions in raw sample units:
//   L_ev  = mean |sigma - |y - pred_A||
//   L_rec = masked mean |y - pred_A| over the first region
//         + masked mean |y - pred_B| over the second region
//   L_br  = (first-region bits of branch A + second-region bits of branch B)
//           / pixel count
//   L     = L_rec + lambda_br * L_br + lambda_ev * L_ev
// In coarse-to-fine order the first region is the low-frequency mask; in
// fine-to-coarse order it is its complement. Training is teacher forced: x_in
// is built from ground-truth subimages, so all nine models train jointly.

#pragma once

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "lcfd/colorspace.hpp"
#include "lcfd/errors.hpp"
#include "lcfd/fdnet.hpp"
#include "lcfd/image.hpp"
#include "lcfd/nn/graph.hpp"
#include "lcfd/nn/params.hpp"
#include "lcfd/subimage.hpp"

namespace lcfd {

struct LossOptions {
  double lambda_ev = 1.0;
  double lambda_br = 1.0;
  bool loss_masking = true;
  // Training default is kNone: with the relaxed mask in the backward pass the
  // split collapsed to one region on the desk-scale corpus, so tau is fitted
  // by the quantile term below instead.
  nn::MaskGradient mask_gradient = nn::MaskGradient::kNone;
  // When false, the variance loss trains the sigma head only: the prediction
  // error it follows is treated as a constant.
  bool ev_moves_prediction = false;
  // Whether the relaxed mask passes gradient to sigma as well as to tau.
  bool mask_gradient_to_sigma = false;
  // Weight and quantile of the term that keeps tau at a quantile of sigma.
  double lambda_tau = 1.0;
  double tau_quantile = 0.5;
};

template <typename T>
struct ModelLoss {
  Var<T> total = nullptr;
  Var<T> rec = nullptr;
  Var<T> br = nullptr;
  Var<T> ev = nullptr;  // null for the single-branch baseline
  Var<T> tau_fit = nullptr;    // quantile term on tau, null if unused
  Var<T> objective = nullptr;  // what training minimises: total + tau term
  // Branch outputs, kept for inspection.
  Var<T> pred_a = nullptr, pred_b = nullptr, sigma = nullptr, tau = nullptr;
  double bits_low = 0;   // bits/pixel spent on low-frequency pixels
  double bits_high = 0;  // bits/pixel spent on high-frequency pixels
  double low_fraction = 0;
};

// Loss values of one model as plain numbers.
struct LossReport {
  double rec = 0, br = 0, ev = 0, total = 0;
  double bits_low = 0, bits_high = 0;

  template <typename T>
  static LossReport from(const ModelLoss<T>& l) {
    LossReport r;
    r.rec = l.rec->value.data[0];
    r.br = l.br->value.data[0];
    r.ev = l.ev ? static_cast<double>(l.ev->value.data[0]) : 0.0;
    r.total = l.total->value.data[0];
    r.bits_low = l.bits_low;
    r.bits_high = l.bits_high;
    return r;
  }
};

namespace detail {

template <typename T>
std::vector<int32_t> symbol_targets(const nn::Tensor4<T>& q, int C) {
  std::vector<int32_t> t(q.size());
  const int32_t mid = (C - 1) / 2;
  for (size_t i = 0; i < q.size(); ++i) t[i] = static_cast<int32_t>(q.data[i]) + mid;
  return t;
}

template <typename T>
double weighted_sum(const nn::Tensor4<T>& a, const nn::Tensor4<T>& w) {
  double s = 0;
  for (size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a.data[i]) * w.data[i];
  return s;
}

}  // namespace detail

// Variance loss: mean |sigma - |y - prediction||. With `through_prediction`
// false the error magnitude is a constant target.
template <typename T>
Var<T> loss_ev(nn::Graph<T>& g, Var<T> sigma, Var<T> y, Var<T> prediction,
               bool through_prediction = true) {
  Var<T> mag = g.abs(g.sub(y, prediction));
  return g.mean(g.abs(g.sub(sigma, through_prediction ? mag : g.detach(mag))));
}

// Reconstruction loss. Masked: mean |y - first| over the first region plus
// mean |y - second| over the second, each over its own pixel count (at least
// 1). Unmasked: plain means of both over all pixels.
template <typename T>
Var<T> loss_rec(nn::Graph<T>& g, Var<T> y, Var<T> first, Var<T> second, Var<T> m_first,
                Var<T> m_second, bool masked = true) {
  Var<T> e1 = g.abs(g.sub(y, first)), e2 = g.abs(g.sub(y, second));
  if (!masked) return g.add(g.mean(e1), g.mean(e2));
  // The normalisers are sums of the masks, so a relaxed mask also gets their
  // gradient.
  return g.add(g.ratio(g.sum(g.mul(m_first, e1)), g.sum(m_first), T(1)),
               g.ratio(g.sum(g.mul(m_second, e2)), g.sum(m_second), T(1)));
}

// Bitrate loss in bits/pixel: code length of the first region under the
// first pmfs plus the second region under the second, over all pixels.
// `bits_*` receive the per-pixel code lengths.
template <typename T>
Var<T> loss_br(nn::Graph<T>& g, Var<T> logits_first, std::span<const int32_t> targets_first,
               Var<T> logits_second, std::span<const int32_t> targets_second, Var<T> m_first,
               Var<T> m_second, bool masked = true, nn::Tensor4<T>* bits_first = nullptr,
               nn::Tensor4<T>* bits_second = nullptr) {
  const auto& shape = m_first->value;
  const T inv = T(1) / static_cast<T>(shape.size());
  if (!masked) m_first = m_second = g.constant(nn::Tensor4<T>(shape.n, 1, shape.h, shape.w, T(1)));
  return g.add(g.cross_entropy_bits(logits_first, targets_first, m_first, inv, T(kPmfFloor), bits_first),
               g.cross_entropy_bits(logits_second, targets_second, m_second, inv, T(kPmfFloor),
                                    bits_second));
}

// Loss of subimage model `index` on a batch. `x_in` is (B, index-1, h, w),
// normalised; `y` is (B, 1, h, w) in raw sample units.
template <typename T, typename PS>
ModelLoss<T> model_loss(nn::Graph<T>& g, PS& ps, const ArchConfig& a, int index,
                        const nn::Tensor4<T>& x_in, const nn::Tensor4<T>& y,
                        const LossOptions& opt) {
  const int C = symbol_count(subimage_of(index).channel);
  const T inv_pixels = T(1) / static_cast<T>(y.size());
  Var<T> x = g.constant(x_in);
  Var<T> yv = g.constant(y);
  ModelLoss<T> out;

  const auto A = branch_a_forward(g, ps, a, index, x);
  out.pred_a = A.prediction;
  out.sigma = A.sigma;
  out.tau = A.tau;
  Var<T> err_a = g.sub(A.prediction, yv);
  Var<T> q_a = g.ste_round(err_a);
  const auto targets_a = detail::symbol_targets(q_a->value, C);
  Var<T> logits_a = pmf_logits(g, ps, [&] {
    return model_prefix(index) + (a.variant == Variant::kNoC2f ? ".net" : ".a");
  }(), A.features, a);

  if (a.variant == Variant::kNoC2f) {
    nn::Tensor4<T> bits;
    out.rec = g.mean(g.abs(err_a));
    out.br = g.cross_entropy_bits(logits_a, targets_a, g.constant(nn::Tensor4<T>(y.n, 1, y.h, y.w, T(1))),
                                  inv_pixels, T(kPmfFloor), &bits);
    out.total = g.add(out.rec, g.scale(out.br, T(opt.lambda_br)));
    out.objective = out.total;
    out.bits_low = out.br->value.data[0];
    out.low_fraction = 1.0;
    return out;
  }

  // Hard low-frequency mask, also used for the reported region split.
  nn::Tensor4<T> hard_low(y.n, 1, y.h, y.w);
  for (int n = 0; n < y.n; ++n) {
    const T t = A.tau->value.data[n];
    const T* s = A.sigma->value.plane(n, 0);
    T* m = hard_low.plane(n, 0);
    for (size_t p = 0; p < y.plane_size(); ++p) m[p] = s[p] <= t ? T(1) : T(0);
  }
  const double n_low = std::accumulate(hard_low.data.begin(), hard_low.data.end(), 0.0);
  const double n_all = static_cast<double>(y.size());
  out.low_fraction = n_low / n_all;

  const bool f2c = a.variant == Variant::kF2c;
  Var<T> m_low = g.frequency_mask(opt.mask_gradient_to_sigma ? A.sigma : g.detach(A.sigma), A.tau,
                                  opt.mask_gradient);
  Var<T> m_first = f2c ? g.one_minus(m_low) : m_low;
  Var<T> m_second = g.one_minus(m_first);

  nn::Tensor4<T> y_norm = y;
  for (auto& v : y_norm.data) v = static_cast<T>(v * kInputScale);
  Var<T> known = g.mul(g.constant(y_norm), m_first);
  const auto B = branch_b_forward(g, ps, a, index, x, known, m_first);
  out.pred_b = B.prediction;
  Var<T> err_b = g.sub(B.prediction, yv);
  Var<T> q_b = g.ste_round(err_b);
  const auto targets_b = detail::symbol_targets(q_b->value, C);
  Var<T> logits_b = pmf_logits(g, ps, model_prefix(index) + ".b", B.features, a);

  out.ev = loss_ev(g, A.sigma, yv, A.prediction, opt.ev_moves_prediction);
  out.rec = loss_rec(g, yv, A.prediction, B.prediction, m_first, m_second, opt.loss_masking);
  nn::Tensor4<T> bits_a, bits_b;
  out.br = loss_br<T>(g, logits_a, targets_a, logits_b, targets_b, m_first, m_second, opt.loss_masking,
                      &bits_a, &bits_b);
  out.total = g.add(g.add(out.rec, g.scale(out.br, T(opt.lambda_br))),
                    g.scale(out.ev, T(opt.lambda_ev)));
  out.objective = out.total;
  if (opt.lambda_tau > 0 && a.variant != Variant::kFixedTau) {
    out.tau_fit = g.quantile_loss(g.detach(A.sigma), A.tau, T(opt.tau_quantile));
    out.objective = g.add(out.total, g.scale(out.tau_fit, T(opt.lambda_tau)));
  }

  nn::Tensor4<T> hard_high = hard_low;
  for (auto& v : hard_high.data) v = T(1) - v;
  const auto& bits_for_low = f2c ? bits_b : bits_a;
  const auto& bits_for_high = f2c ? bits_a : bits_b;
  out.bits_low = detail::weighted_sum(bits_for_low, hard_low) / n_all;
  out.bits_high = detail::weighted_sum(bits_for_high, hard_high) / n_all;
  return out;
}

inline LossOptions loss_options_for(Variant v, double lambda_ev, double lambda_br) {
  LossOptions o;
  o.lambda_ev = lambda_ev;
  o.lambda_br = lambda_br;
  o.loss_masking = v != Variant::kNoLossMasking;
  return o;
}

inline std::string mask_gradient_name(nn::MaskGradient m) {
  switch (m) {
    case nn::MaskGradient::kNone: return "none";
    case nn::MaskGradient::kSte: return "ste";
    case nn::MaskGradient::kSoft: return "soft";
  }
  return "?";
}

inline nn::MaskGradient parse_mask_gradient(const std::string& s) {
  for (auto m : {nn::MaskGradient::kNone, nn::MaskGradient::kSte, nn::MaskGradient::kSoft})
    if (mask_gradient_name(m) == s) return m;
  throw input_error("unknown mask gradient '" + s + "'");
}

// ---------------------------------------------------------------------------
// Batches

// Per-model training inputs stacked over a batch of subimage sets.
template <typename T>
struct ModelBatch {
  nn::Tensor4<T> x_in;  // (B, index-1, h, w), normalised
  nn::Tensor4<T> y;     // (B, 1, h, w), raw
};

template <typename T>
ModelBatch<T> make_batch(const std::vector<SubimageSet>& sets, int index) {
  if (sets.empty()) throw input_error("empty batch");
  const IntPlane& ref = sets[0].ordered(0);
  const int B = static_cast<int>(sets.size()), w = ref.width, h = ref.height;
  ModelBatch<T> out{nn::Tensor4<T>(B, index - 1, h, w), nn::Tensor4<T>(B, 1, h, w)};
  for (int b = 0; b < B; ++b) {
    for (int k = 0; k < index - 1; ++k) {
      const IntPlane& p = sets[b].ordered(k);
      if (p.width != w || p.height != h) throw input_error("batch planes differ in size");
      T* dst = out.x_in.plane(b, k);
      for (size_t i = 0; i < p.size(); ++i) dst[i] = static_cast<T>(p.samples[i] * kInputScale);
    }
    const IntPlane& yp = sets[b].ordered(index - 1);
    std::copy(yp.samples.begin(), yp.samples.end(), out.y.plane(b, 0));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation: real-valued code length of the network-coded subimages

struct NetworkBits {
  std::array<double, kNumNetworkCoded> model_bits{};  // per model, total bits
  double low_bits = 0;   // bits on low-frequency pixels (of this model's masks)
  double high_bits = 0;  // bits on high-frequency pixels
  std::array<double, kNumNetworkCoded> tau{};
  std::array<double, kNumNetworkCoded> mean_sigma{};
  std::array<double, kNumNetworkCoded> low_ratio{};
  double pixels = 0;  // original (unpadded) pixel count

  double total_bits() const { return std::accumulate(model_bits.begin(), model_bits.end(), 0.0); }
  double bpp() const { return total_bits() / pixels; }
};

// Cross-entropy of the ground-truth residuals under the model pmfs, with hard
// masks and unsnapped outputs. Optionally splits bits using `region_masks`
// (one low-frequency mask per model) instead of the model's own masks.
inline NetworkBits network_bits(const FdnetModel& m, const RgbImage& img,
                                const std::vector<FrequencyMask>* region_masks = nullptr) {
  const SubimageSet set = subimages_of(img);
  NetworkBits out;
  out.pixels = static_cast<double>(img.width) * img.height;
  for (int index = kFirstNetworkIndex; index <= kNumSubimages; ++index) {
    const int k = index - kFirstNetworkIndex;
    const IntPlane& y = set.ordered(index - 1);
    const int C = symbol_count(subimage_of(index).channel);
    const int mid = (C - 1) / 2;
    const nn::Tensor4<float> x_in = to_tensor(condition_stack<float>(set, index));
    const BranchEval A = eval_branch_a(m, index, x_in);
    const size_t P = y.size();
    auto bits_at = [&](const BranchEval& e, const std::vector<uint32_t>& px, std::vector<double>& bits) {
      const PmfPlane pmf = pmf_at(m, e, px);
      for (size_t j = 0; j < px.size(); ++j) {
        const int32_t q = quantize_residual(e.prediction.samples[px[j]], y.samples[px[j]]);
        bits[px[j]] = -std::log2(std::max<double>(pmf.at(j, q + mid), kPmfFloor));
      }
    };
    std::vector<double> bits(P);
    FrequencyMask low(y.width, y.height, 1);
    if (!m.coarse_to_fine()) {
      bits_at(A, all_pixels(P), bits);
    } else {
      low = make_mask(A.sigma, A.tau);
      out.tau[k] = A.tau;
      out.mean_sigma[k] =
          std::accumulate(A.sigma.samples.begin(), A.sigma.samples.end(), 0.0) / static_cast<double>(P);
      const bool f2c = m.arch.variant == Variant::kF2c;
      std::vector<uint32_t> first, second;
      for (uint32_t i = 0; i < P; ++i) ((low.samples[i] != 0) != f2c ? first : second).push_back(i);
      bits_at(A, first, bits);
      nn::Tensor4<float> known(1, 1, y.height, y.width), mk(1, 1, y.height, y.width);
      for (uint32_t i : first) {
        mk.data[i] = 1;
        known.data[i] = static_cast<float>(y.samples[i] * kInputScale);
      }
      const BranchEval B = eval_branch_b(m, index, x_in, known, mk);
      bits_at(B, second, bits);
    }
    const FrequencyMask& split_mask = region_masks ? (*region_masks)[k] : low;
    size_t n_low = 0;
    for (size_t i = 0; i < P; ++i) {
      out.model_bits[k] += bits[i];
      (split_mask.samples[i] ? out.low_bits : out.high_bits) += bits[i];
      n_low += low.samples[i];
    }
    out.low_ratio[k] = static_cast<double>(n_low) / P;
  }
  return out;
}

// Low-frequency masks of every network-coded subimage of `img`.
inline std::vector<FrequencyMask> model_masks(const FdnetModel& m, const RgbImage& img) {
  if (!m.coarse_to_fine()) throw input_error("model has no frequency decomposition");
  const SubimageSet set = subimages_of(img);
  std::vector<FrequencyMask> out;
  for (int index = kFirstNetworkIndex; index <= kNumSubimages; ++index) {
    const BranchEval A = eval_branch_a(m, index, to_tensor(condition_stack<float>(set, index)));
    out.push_back(make_mask(A.sigma, A.tau));
  }
  return out;
}

// Mean network-coded bits per pixel over images, and its per-model split.
struct ValidationResult {
  double bpp = 0;
  std::array<double, kNumNetworkCoded> model_bpp{};
};

inline ValidationResult validate(const FdnetModel& m, const std::vector<RgbImage>& images) {
  ValidationResult r;
  if (images.empty()) return r;
  for (const auto& img : images) {
    const NetworkBits nb = network_bits(m, img);
    r.bpp += nb.bpp();
    for (int k = 0; k < kNumNetworkCoded; ++k) r.model_bpp[k] += nb.model_bits[k] / nb.pixels;
  }
  r.bpp /= images.size();
  for (auto& v : r.model_bpp) v /= images.size();
  return r;
}

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  double lambda_ev = 1.0;
  double lambda_br = 1.0;
  double lr = 1e-3;
  double lr_decay = 0.1;
  int decay_every = 100;  // epochs; 0 disables decay
  int batch = 8;
  int patch = 64;
  int patches_per_image = 1;  // random crops drawn from each image per epoch
  int epochs = 300;
  uint64_t seed = 7;
  Variant variant = Variant::kFull;
  int width = 32;
  int depth = 4;
  // Single-branch width; 0 matches the two-branch parameter count.
  int single_width = 0;
  std::vector<double> fixed_tau;  // 1 or 9 values, fixed-tau variant only
  int val_every = 50;             // epochs; 0 validates only before and after
  nn::MaskGradient mask_gradient = nn::MaskGradient::kNone;
  double lambda_tau = 1.0;
  double tau_quantile = 0.5;

  // Training protocol at full scale.
  static TrainConfig full_scale() {
    TrainConfig c;
    c.batch = 24;
    c.patch = 128;
    c.epochs = 3000;
    c.decay_every = 1000;
    return c;
  }

  ArchConfig arch() const {
    ArchConfig a;
    a.width = width;
    a.depth = depth;
    a.variant = variant;
    if (variant == Variant::kNoC2f)
      a.width = single_width > 0 ? single_width : matched_single_branch_width(width, depth);
    return a;
  }

  LossOptions loss_options() const {
    LossOptions o = loss_options_for(variant, lambda_ev, lambda_br);
    o.mask_gradient = mask_gradient;
    o.lambda_tau = lambda_tau;
    o.tau_quantile = tau_quantile;
    return o;
  }

  double lr_at(int epoch) const {
    return decay_every > 0 ? lr * std::pow(lr_decay, epoch / decay_every) : lr;
  }

  void validate_fields() const {
    if (batch <= 0 || epochs < 0 || width <= 0 || depth <= 0 || patches_per_image <= 0)
      throw input_error("batch, patches_per_image, width and depth must be positive");
    if (patch < 16 || patch % 2 != 0) throw input_error("patch size must be even and >= 16");
    if (lambda_ev < 0 || lambda_br < 0 || lambda_tau < 0)
      throw input_error("loss weights must be non-negative");
    if (!(tau_quantile > 0 && tau_quantile < 1)) throw input_error("tau_quantile must lie in (0,1)");
    if (!(lr > 0)) throw input_error("learning rate must be positive");
    if (variant == Variant::kFixedTau && fixed_tau.size() != 1 &&
        fixed_tau.size() != static_cast<size_t>(kNumNetworkCoded))
      throw input_error("fixed-tau variant needs 1 or 9 fixed_tau values");
  }

  // Flat key=value form, one pair per line.
  std::string to_text() const {
    std::ostringstream s;
    s << std::setprecision(17);
    s << "lambda_ev=" << lambda_ev << "\nlambda_br=" << lambda_br << "\nlr=" << lr
      << "\nlr_decay=" << lr_decay << "\ndecay_every=" << decay_every << "\nbatch=" << batch
      << "\npatch=" << patch << "\npatches_per_image=" << patches_per_image << "\nepochs=" << epochs << "\nseed=" << seed
      << "\nvariant=" << variant_name(variant) << "\nwidth=" << width << "\ndepth=" << depth
      << "\nsingle_width=" << single_width << "\nval_every=" << val_every
      << "\nmask_gradient=" << mask_gradient_name(mask_gradient) << "\nlambda_tau=" << lambda_tau
      << "\ntau_quantile=" << tau_quantile << "\n";
    if (!fixed_tau.empty()) {
      s << "fixed_tau=";
      for (size_t i = 0; i < fixed_tau.size(); ++i) s << (i ? "," : "") << fixed_tau[i];
      s << "\n";
    }
    return s.str();
  }

  // Applies one key=value setting.
  void set(const std::string& key, const std::string& value) {
    auto num = [&](auto& field) {
      std::istringstream in(value);
      std::remove_reference_t<decltype(field)> v{};
      if (!(in >> v) || !(in >> std::ws).eof())
        throw input_error("bad value for " + key + ": '" + value + "'");
      field = v;
    };
    if (key == "lambda_ev") num(lambda_ev);
    else if (key == "lambda_br") num(lambda_br);
    else if (key == "lr") num(lr);
    else if (key == "lr_decay") num(lr_decay);
    else if (key == "decay_every") num(decay_every);
    else if (key == "batch") num(batch);
    else if (key == "patch") num(patch);
    else if (key == "patches_per_image") num(patches_per_image);
    else if (key == "epochs") num(epochs);
    else if (key == "seed") num(seed);
    else if (key == "variant") variant = parse_variant(value);
    else if (key == "width") num(width);
    else if (key == "depth") num(depth);
    else if (key == "single_width") num(single_width);
    else if (key == "val_every") num(val_every);
    else if (key == "mask_gradient") mask_gradient = parse_mask_gradient(value);
    else if (key == "lambda_tau") num(lambda_tau);
    else if (key == "tau_quantile") num(tau_quantile);
    else if (key == "fixed_tau") {
      fixed_tau.clear();
      std::istringstream in(value);
      std::string item;
      while (std::getline(in, item, ',')) {
        std::istringstream one(item);
        double v = 0;
        if (!(one >> v) || !(one >> std::ws).eof())
          throw input_error("bad value for fixed_tau: '" + value + "'");
        fixed_tau.push_back(v);
      }
    } else {
      throw input_error("unknown config key '" + key + "'");
    }
  }

  // Parses key=value lines; blank lines and '#' comments are ignored.
  static TrainConfig parse(const std::string& text) { return parse(text, TrainConfig()); }
  static TrainConfig parse(const std::string& text, TrainConfig base) {
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.resize(hash);
      const auto b = line.find_first_not_of(" \t\r");
      if (b == std::string::npos) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw input_error("config line without '=': " + line);
      auto trim = [](std::string s) {
        const auto f = s.find_first_not_of(" \t\r");
        const auto l = s.find_last_not_of(" \t\r");
        return f == std::string::npos ? std::string() : s.substr(f, l - f + 1);
      };
      base.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return base;
  }
};

// Text stored in a float buffer, one character per value.
inline nn::Tensor4<float> text_buffer(const std::string& s) {
  nn::Tensor4<float> t(1, 1, 1, static_cast<int>(std::max<size_t>(s.size(), 1)));
  for (size_t i = 0; i < s.size(); ++i) t.data[i] = static_cast<unsigned char>(s[i]);
  return t;
}

inline std::string buffer_text(const nn::Tensor4<float>& t) {
  std::string s;
  for (float v : t.data)
    if (v > 0) s.push_back(static_cast<char>(static_cast<int>(v)));
  return s;
}

struct EpochRecord {
  int epoch = 0;
  std::array<LossReport, kNumNetworkCoded> loss{};  // averaged over batches
  bool validated = false;
  ValidationResult val;
};

struct TrainResult {
  FdnetModel model;
  std::vector<EpochRecord> history;
  ValidationResult initial;
  ValidationResult final;
};

namespace detail {

inline void log_epoch(std::ostream& log, const EpochRecord& r) {
  for (int k = 0; k < kNumNetworkCoded; ++k) {
    const auto& l = r.loss[k];
    log << "epoch=" << r.epoch << " model=" << subimage_of(k + kFirstNetworkIndex).name()
        << std::setprecision(6) << " L_rec=" << l.rec << " L_br=" << l.br << " L_ev=" << l.ev
        << " val_bpp=";
    if (r.validated) log << r.val.model_bpp[k]; else log << "-";
    log << "\n";
  }
  if (r.validated) log << "epoch=" << r.epoch << " model=all val_bpp=" << r.val.bpp << "\n";
  log.flush();
}

}  // namespace detail

// Trains all nine subimage models. Deterministic given the config.
inline TrainResult train(const std::vector<RgbImage>& corpus, const std::vector<RgbImage>& validation,
                         const TrainConfig& cfg, std::ostream* log = nullptr) {
  cfg.validate_fields();
  if (corpus.empty()) throw input_error("empty training corpus");
  for (const auto& img : corpus)
    if (img.width < cfg.patch || img.height < cfg.patch)
      throw input_error("corpus image smaller than the patch size");

  const ArchConfig arch = cfg.arch();
  TrainResult res{FdnetModel::create(arch, cfg.seed), {}, {}, {}};
  FdnetModel& model = res.model;
  if (arch.variant == Variant::kFixedTau) {
    std::array<float, kNumNetworkCoded> taus{};
    for (int k = 0; k < kNumNetworkCoded; ++k)
      taus[k] = static_cast<float>(cfg.fixed_tau.size() == 1 ? cfg.fixed_tau[0] : cfg.fixed_tau[k]);
    model.set_fixed_tau(taus);
  }
  model.params.add("meta.config", text_buffer(cfg.to_text()), false);

  const LossOptions opt = cfg.loss_options();
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);

  res.initial = validate(model, validation);
  if (log) {
    EpochRecord r0;
    r0.validated = true;
    r0.val = res.initial;
    detail::log_epoch(*log, r0);
  }

  std::vector<size_t> order(corpus.size() * cfg.patches_per_image);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (size_t i = 0; i < order.size(); ++i) order[i] = i % corpus.size();
    std::shuffle(order.begin(), order.end(), rng);
    const double lr = cfg.lr_at(epoch - 1);
    EpochRecord rec;
    rec.epoch = epoch;
    int batches = 0;
    for (size_t start = 0; start < order.size(); start += cfg.batch) {
      const size_t end = std::min(order.size(), start + cfg.batch);
      std::vector<SubimageSet> sets;
      for (size_t i = start; i < end; ++i)
        sets.push_back(subimages_of(extract_patches(corpus[order[i]], cfg.patch, 1, rng())[0]));
      for (int index = kFirstNetworkIndex; index <= kNumSubimages; ++index) {
        const ModelBatch<float> b = make_batch<float>(sets, index);
        nn::Graph<float> g;
        const ModelLoss<float> l = model_loss(g, model.params, arch, index, b.x_in, b.y, opt);
        try {
          g.backward(l.objective);
        } catch (const Error& e) {
          if (e.kind() != ErrorKind::kTraining) throw;
          throw Error(ErrorKind::kTraining, std::string(e.what()) + " at epoch " + std::to_string(epoch) +
                                                " model " + subimage_of(index).name());
        }
        const LossReport r = LossReport::from(l);
        auto& acc = rec.loss[index - kFirstNetworkIndex];
        acc.rec += r.rec, acc.br += r.br, acc.ev += r.ev, acc.total += r.total;
        acc.bits_low += r.bits_low, acc.bits_high += r.bits_high;
      }
      nn::adam_step(model.params, lr);
      model.params.zero_grad();
      ++batches;
    }
    for (auto& l : rec.loss) {
      l.rec /= batches, l.br /= batches, l.ev /= batches, l.total /= batches;
      l.bits_low /= batches, l.bits_high /= batches;
    }
    if (!validation.empty() &&
        ((cfg.val_every > 0 && epoch % cfg.val_every == 0) || epoch == cfg.epochs)) {
      rec.validated = true;
      rec.val = validate(model, validation);
    }
    if (log) detail::log_epoch(*log, rec);
    res.history.push_back(rec);
  }
  res.final = res.history.empty() || !res.history.back().validated ? validate(model, validation)
                                                                  : res.history.back().val;
  return res;
}

// Corpus-average threshold of each model, the fixed-tau variant's default.
inline std::vector<double> mean_tau(const FdnetModel& m, const std::vector<RgbImage>& images) {
  std::vector<double> tau(kNumNetworkCoded, 0.0);
  for (const auto& img : images) {
    const SubimageSet set = subimages_of(img);
    for (int index = kFirstNetworkIndex; index <= kNumSubimages; ++index)
      tau[index - kFirstNetworkIndex] +=
          eval_branch_a(m, index, to_tensor(condition_stack<float>(set, index))).tau;
  }
  for (auto& t : tau) t /= std::max<size_t>(images.size(), 1);
  return tau;
}

}  // namespace lcfd
