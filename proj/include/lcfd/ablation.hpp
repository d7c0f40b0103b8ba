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

// Ablation runs: train each variant on the same corpus, seed and schedule and
// compare network-coded rates on held-out images, split into low and high
// frequency regions by the full model's masks.

#pragma once

#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "lcfd/training.hpp"

namespace lcfd {

struct AblationResult {
  Variant variant = Variant::kFull;
  size_t params = 0;  // trainable scalars
  double bpp = 0;     // network-coded subimages only, mean over images
  double low_bpp = 0;
  double high_bpp = 0;
  double delta_pct = 0;       // (bpp - full) / full
  double low_delta_pct = 0;   // same, per region
  double high_delta_pct = 0;
};

struct AblationRun {
  std::vector<AblationResult> results;  // full model first
  std::vector<FdnetModel> models;       // same order
  std::vector<double> fixed_tau;        // threshold used by the fixed-tau run
  std::string to_text() const;
};

inline std::vector<Variant> parse_variant_list(const std::string& list) {
  std::vector<Variant> out;
  std::istringstream in(list);
  std::string item;
  while (std::getline(in, item, ','))
    if (!item.empty()) out.push_back(parse_variant(item));
  if (out.empty()) throw input_error("empty variant list");
  return out;
}

// Mean network-coded bpp of `m` on `images`, split by `masks[i]` (the full
// model's low-frequency masks for image i).
inline AblationResult evaluate_variant(const FdnetModel& m, const std::vector<RgbImage>& images,
                                       const std::vector<std::vector<FrequencyMask>>& masks) {
  AblationResult r;
  r.variant = m.arch.variant;
  r.params = m.params.num_values();
  for (size_t i = 0; i < images.size(); ++i) {
    const NetworkBits nb = network_bits(m, images[i], &masks[i]);
    r.bpp += nb.bpp();
    r.low_bpp += nb.low_bits / nb.pixels;
    r.high_bpp += nb.high_bits / nb.pixels;
  }
  const double n = static_cast<double>(images.size());
  r.bpp /= n, r.low_bpp /= n, r.high_bpp /= n;
  return r;
}

inline AblationRun run_ablation(const std::vector<RgbImage>& corpus, const std::vector<RgbImage>& heldout,
                                const TrainConfig& base, const std::vector<Variant>& variants,
                                std::ostream* log = nullptr) {
  if (heldout.empty()) throw input_error("ablation needs held-out images");
  AblationRun run;
  auto train_variant = [&](Variant v) {
    TrainConfig c = base;
    c.variant = v;
    if (v == Variant::kFixedTau) c.fixed_tau = run.fixed_tau;
    if (log) *log << "# training variant " << variant_name(v) << "\n";
    return train(corpus, heldout, c, log).model;
  };
  run.models.push_back(train_variant(Variant::kFull));
  const FdnetModel& full = run.models[0];
  run.fixed_tau = base.fixed_tau.empty() ? mean_tau(full, heldout) : base.fixed_tau;
  std::vector<std::vector<FrequencyMask>> masks;
  for (const auto& img : heldout) masks.push_back(model_masks(full, img));
  run.results.push_back(evaluate_variant(full, heldout, masks));
  for (Variant v : variants) {
    if (v == Variant::kFull) continue;
    run.models.push_back(train_variant(v));
    run.results.push_back(evaluate_variant(run.models.back(), heldout, masks));
  }
  const AblationResult& f = run.results[0];
  auto pct = [](double v, double ref) { return ref > 0 ? 100.0 * (v - ref) / ref : 0.0; };
  for (auto& r : run.results) {
    r.delta_pct = pct(r.bpp, f.bpp);
    r.low_delta_pct = pct(r.low_bpp, f.low_bpp);
    r.high_delta_pct = pct(r.high_bpp, f.high_bpp);
  }
  return run;
}

inline std::string AblationRun::to_text() const {
  std::ostringstream o;
  o << "[ablation]\n";
  o << "note=bpp covers the nine network-coded subimages; fallback-coded a-planes are excluded\n";
  o << "note=low/high regions are taken from the full model's masks for every variant\n";
  o << "fixed_tau=";
  for (size_t i = 0; i < fixed_tau.size(); ++i) o << (i ? "," : "") << std::setprecision(6) << fixed_tau[i];
  o << "\n";
  o << std::left << std::setw(17) << "variant" << std::right << std::setw(10) << "params" << std::setw(11) << "bpp"
    << std::setw(11) << "low_bpp" << std::setw(11) << "high_bpp" << std::setw(10) << "delta%" << std::setw(10)
    << "low_d%" << std::setw(10) << "high_d%" << "\n";
  o << std::fixed;
  for (const auto& r : results)
    o << std::left << std::setw(17) << variant_name(r.variant) << std::right << std::setw(10) << r.params
      << std::setprecision(6) << std::setw(11) << r.bpp << std::setw(11) << r.low_bpp << std::setw(11)
      << r.high_bpp << std::setprecision(2) << std::setw(10) << r.delta_pct << std::setw(10) << r.low_delta_pct
      << std::setw(10) << r.high_delta_pct << "\n";
  return o.str();
}

}  // namespace lcfd
