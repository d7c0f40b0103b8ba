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

// Corpus statistics: per-subimage rates, thresholds, variance means and their
// correlations, written as key=value lines plus aligned tables.

#pragma once

#include <cmath>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "lcfd/codec.hpp"

namespace lcfd {

// Pearson correlation; empty when fewer than two points or a constant series.
inline std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw input_error("pearson: series differ in length");
  const size_t n = x.size();
  if (n < 2) return std::nullopt;
  double mx = 0, my = 0;
  for (size_t i = 0; i < n; ++i) mx += x[i], my += y[i];
  mx /= n, my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0 || syy == 0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

struct ImageStats {
  std::string name;
  Dims dims;
  double bpp = 0;         // whole container
  double header_bpp = 0;  // header and debug hashes
  std::array<double, kNumSubimages> subimage_bpp{};
  std::array<double, kNumSubimages> tau{};
  std::array<double, kNumSubimages> mean_sigma{};
  std::array<double, kNumSubimages> low_ratio{};
};

struct StatsReport {
  std::string model;  // hex content hash
  std::vector<ImageStats> images;
  // Means over images.
  double bpp = 0;
  double header_bpp = 0;
  std::array<double, kNumSubimages> subimage_bpp{};
  std::array<double, kNumSubimages> tau{};
  std::array<double, kNumSubimages> mean_sigma{};
  std::array<double, kNumSubimages> low_ratio{};
  // Across images, per network-coded subimage.
  std::array<std::optional<double>, kNumSubimages> corr_tau_sigma{};
  std::array<std::optional<double>, kNumSubimages> corr_tau_bpp{};

  std::string to_text() const;
};

inline ImageStats image_stats(const std::string& name, const EncodeReport& r) {
  ImageStats s;
  s.name = name;
  s.dims = r.header.original;
  const double px = r.pixels();
  s.bpp = r.bpp();
  s.header_bpp = 8.0 * kHeaderBytes / px;
  for (int k = 0; k < kNumSubimages; ++k) {
    const SectionReport& sec = r.sections[k];
    // Debug hashes travel inside sections but are overhead, not payload.
    const uint64_t hash_bytes = sec.network && r.header.debug_hashes() ? 16 : 0;
    s.subimage_bpp[k] = 8.0 * (sec.bytes - hash_bytes) / px;
    s.header_bpp += 8.0 * hash_bytes / px;
    s.tau[k] = sec.tau;
    s.mean_sigma[k] = sec.mean_sigma;
    s.low_ratio[k] = sec.low_ratio();
  }
  return s;
}

// Encodes every image and aggregates.
inline StatsReport corpus_stats(const FdnetModel& m, const Corpus& corpus) {
  if (corpus.images.empty()) throw input_error("empty corpus");
  StatsReport rep;
  const Hash256 h = model_hash(m.params);
  rep.model = hex(h);
  for (size_t i = 0; i < corpus.images.size(); ++i)
    rep.images.push_back(image_stats(corpus.names[i], encode_image(corpus.images[i], m).report));
  const double n = static_cast<double>(rep.images.size());
  for (const auto& s : rep.images) {
    rep.bpp += s.bpp / n;
    rep.header_bpp += s.header_bpp / n;
    for (int k = 0; k < kNumSubimages; ++k) {
      rep.subimage_bpp[k] += s.subimage_bpp[k] / n;
      rep.tau[k] += s.tau[k] / n;
      rep.mean_sigma[k] += s.mean_sigma[k] / n;
      rep.low_ratio[k] += s.low_ratio[k] / n;
    }
  }
  if (m.coarse_to_fine()) {
    for (int k = kNumInitial; k < kNumSubimages; ++k) {
      std::vector<double> t, sg, b;
      for (const auto& s : rep.images) {
        t.push_back(s.tau[k]);
        sg.push_back(s.mean_sigma[k]);
        b.push_back(s.subimage_bpp[k]);
      }
      rep.corr_tau_sigma[k] = pearson(t, sg);
      rep.corr_tau_bpp[k] = pearson(t, b);
    }
  }
  return rep;
}

namespace detail {

inline std::string fmt(double v, int prec = 6) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(prec) << v;
  return s.str();
}

inline std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : "n/a"; }

}  // namespace detail

inline std::string StatsReport::to_text() const {
  using detail::fmt;
  std::ostringstream o;
  o << "# lcfd stats\n";
  o << "model=" << model << "\n";
  o << "images=" << images.size() << "\n";
  o << "bpp=" << fmt(bpp) << "\n";
  o << "header_bpp=" << fmt(header_bpp) << "\n";
  double net = 0, fb = 0;
  for (int k = 0; k < kNumSubimages; ++k) (k < kNumInitial ? fb : net) += subimage_bpp[k];
  o << "fallback_bpp=" << fmt(fb) << "\n";
  o << "network_bpp=" << fmt(net) << "\n";
  const int yd = kNumInitial;
  o << "corr_tau_sigma_Yd=" << fmt(corr_tau_sigma[yd]) << "\n";
  o << "corr_tau_bpp_Yd=" << fmt(corr_tau_bpp[yd]) << "\n";
  o << "\n[subimages]\n";
  o << std::left << std::setw(9) << "subimage" << std::right << std::setw(11) << "bpp" << std::setw(11) << "tau"
    << std::setw(12) << "mean_sigma" << std::setw(11) << "low_ratio" << std::setw(16) << "corr_tau_sigma"
    << std::setw(14) << "corr_tau_bpp" << "\n";
  for (int k = 0; k < kNumSubimages; ++k) {
    o << std::left << std::setw(9) << coding_order()[k].name() << std::right << std::setw(11)
      << fmt(subimage_bpp[k]);
    if (k < kNumInitial) {
      o << std::setw(11) << "-" << std::setw(12) << "-" << std::setw(11) << "-" << std::setw(16) << "-"
        << std::setw(14) << "-";
    } else {
      o << std::setw(11) << fmt(tau[k]) << std::setw(12) << fmt(mean_sigma[k]) << std::setw(11)
        << fmt(low_ratio[k]) << std::setw(16) << fmt(corr_tau_sigma[k]) << std::setw(14)
        << fmt(corr_tau_bpp[k]);
    }
    o << "\n";
  }
  o << "\n[images]\n";
  o << std::left << std::setw(28) << "name" << std::right << std::setw(11) << "width" << std::setw(8) << "height"
    << std::setw(11) << "bpp" << std::setw(11) << "tau_Yd" << std::setw(11) << "sigma_Yd" << std::setw(11)
    << "low_Yd" << "\n";
  for (const auto& s : images)
    o << std::left << std::setw(28) << s.name << std::right << std::setw(11) << s.dims.width << std::setw(8)
      << s.dims.height << std::setw(11) << fmt(s.bpp) << std::setw(11) << fmt(s.tau[yd]) << std::setw(11)
      << fmt(s.mean_sigma[yd]) << std::setw(11) << fmt(s.low_ratio[yd]) << "\n";
  // Per-image, per-subimage values, for external plotting.
  auto table = [&](const char* title, int first, auto field) {
    o << "\n[" << title << "]\n" << std::left << std::setw(28) << "name";
    for (int k = first; k < kNumSubimages; ++k) o << std::right << std::setw(10) << coding_order()[k].name();
    o << "\n";
    for (const auto& s : images) {
      o << std::left << std::setw(28) << s.name;
      for (int k = first; k < kNumSubimages; ++k) o << std::right << std::setw(10) << fmt(field(s)[k], 4);
      o << "\n";
    }
  };
  table("image_subimage_bpp", 0, [](const ImageStats& s) { return s.subimage_bpp; });
  table("image_tau", kNumInitial, [](const ImageStats& s) { return s.tau; });
  table("image_mean_sigma", kNumInitial, [](const ImageStats& s) { return s.mean_sigma; });
  return o.str();
}

}  // namespace lcfd
