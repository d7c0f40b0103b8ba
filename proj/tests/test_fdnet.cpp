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

#include <cmath>
#include <random>

#include "lcfd/colorspace.hpp"
#include "lcfd/fdnet.hpp"
#include "lcfd/nn/checkpoint.hpp"
#include "lcfd/subimage.hpp"
#include "test_support.hpp"

namespace lcfd {
namespace {

ArchConfig tiny_arch(Variant v = Variant::kFull) { return ArchConfig{6, 2, v, {}}; }

SubimageSet subimages(const RgbImage& img) { return split(rct_forward(img)); }

void fill(nn::ParamStore<float>& ps, const std::string& name, float v) {
  for (auto& x : ps.get(name).value.data) x = v;
}

// Index of a Y and a U model among the network-coded ones.
constexpr int kYd = 4;
constexpr int kUd = 5;

TEST(Fdnet, ConstantNetworkPredictsHeadBias) {
  FdnetModel m = FdnetModel::create(tiny_arch(), 1);
  fill(m.params, "s4.a.pred.w", 0.0f);
  fill(m.params, "s4.a.pred.b", 0.3f);
  ConditionStack<float> x = condition_stack(subimages(RgbImage(8, 8)), kYd);
  for (auto& p : x.planes) std::fill(p.samples.begin(), p.samples.end(), 0.0f);
  const LfcOutputs out = lfc_forward(m, x);
  for (float v : out.prediction.samples) EXPECT_FLOAT_EQ(v, 0.3f * 255.0f);
}

TEST(Fdnet, ZeroSigmaLogitsGiveSoftplusZero) {
  FdnetModel m = FdnetModel::create(tiny_arch(), 2);
  fill(m.params, "s4.a.sigma.w", 0.0f);
  fill(m.params, "s4.a.sigma.b", 0.0f);
  const auto x = condition_stack(subimages(testing::random_image(10, 6, 3)), kYd);
  const LfcOutputs out = lfc_forward(m, x);
  ASSERT_EQ(out.sigma.size(), 15u);
  for (float v : out.sigma.samples) EXPECT_NEAR(v, 0.69314718f, 1e-6);
}

TEST(Fdnet, EqualPmfLogitsGiveUniformCost) {
  FdnetModel m = FdnetModel::create(tiny_arch(), 3);
  fill(m.params, "s4.a.pmf.w", 0.0f);
  fill(m.params, "s4.a.pmf.b", 0.25f);
  const auto x = condition_stack(subimages(testing::random_image(8, 8, 4)), kYd);
  const LfcOutputs out = lfc_forward(m, x);
  ASSERT_EQ(out.pmf.symbols, 511);
  for (size_t j = 0; j < out.pmf.pixels; ++j)
    for (int k = 0; k < 511; k += 37)
      EXPECT_NEAR(-std::log2(out.pmf.at(j, k)), 8.99718, 1e-4);
}

TEST(Fdnet, PredictionIsClampedToChannelRange) {
  FdnetModel m = FdnetModel::create(tiny_arch(), 4);
  fill(m.params, "s4.a.pred.w", 0.0f);
  fill(m.params, "s4.a.pred.b", 3.0f);
  fill(m.params, "s5.a.pred.w", 0.0f);
  fill(m.params, "s5.a.pred.b", -3.0f);
  const auto set = subimages(testing::random_image(8, 8, 5));
  for (float v : lfc_forward(m, condition_stack(set, kYd)).prediction.samples) EXPECT_EQ(v, 255.0f);
  for (float v : lfc_forward(m, condition_stack(set, kUd)).prediction.samples) EXPECT_EQ(v, -255.0f);
}

TEST(Fdnet, OutputInvariantsOnRandomModel) {
  const FdnetModel m = FdnetModel::create(tiny_arch(), 5);
  const auto set = subimages(testing::random_image(14, 10, 6));
  for (int n = kFirstNetworkIndex; n <= kNumSubimages; ++n) {
    const auto x = condition_stack(set, n);
    const LfcOutputs lo = lfc_forward(m, x);
    const SampleRange r = channel_range(subimage_of(n).channel);
    EXPECT_GE(lo.tau, 0.0f);
    for (float s : lo.sigma.samples) EXPECT_GE(s, 0.0f);
    for (float p : lo.prediction.samples) {
      EXPECT_GE(p, r.lo);
      EXPECT_LE(p, r.hi);
    }
    const FrequencyMask mask = make_mask(lo.sigma, lo.tau);
    const HfcOutputs hi = hfc_forward(m, x, set.ordered(n - 1), mask);
    for (const PmfPlane* pmf : {&lo.pmf, &hi.pmf}) {
      ASSERT_EQ(pmf->symbols, symbol_count(subimage_of(n).channel));
      ASSERT_EQ(pmf->pixels, 35u);
      for (size_t j = 0; j < pmf->pixels; ++j) {
        double sum = 0;
        for (int k = 0; k < pmf->symbols; ++k) {
          EXPECT_GT(pmf->at(j, k), 0.0f);
          sum += pmf->at(j, k);
        }
        EXPECT_NEAR(sum, 1.0, 1e-5);
      }
    }
  }
}

TEST(Fdnet, MaskExamples) {
  Plane<float> s(2, 1);
  s.samples = {0.5f, 3.0f};
  EXPECT_EQ(make_mask(s, 2.72f).samples, (std::vector<uint8_t>{1, 0}));
  EXPECT_EQ(make_mask(s, 0.0f).samples, (std::vector<uint8_t>{0, 0}));
  s.samples = {2.5f, 2.515625f};
  EXPECT_EQ(make_mask(s, 2.5f).samples, (std::vector<uint8_t>{1, 0}));
}

TEST(Fdnet, MaskAndComplementPartition) {
  std::mt19937 rng(7);
  std::uniform_real_distribution<float> d(0, 4);
  Plane<float> s(9, 7);
  for (auto& v : s.samples) v = d(rng);
  const FrequencyMask lo = make_mask(s, 1.75f), hi = complement(lo);
  for (size_t i = 0; i < s.size(); ++i) {
    EXPECT_TRUE(lo.samples[i] == 0 || lo.samples[i] == 1);
    EXPECT_EQ(lo.samples[i] + hi.samples[i], 1);
  }
}

TEST(Fdnet, QuantizerExamples) {
  EXPECT_EQ(quantize_residual(100.7, 100), 1);
  EXPECT_EQ(quantize_residual(4.5, 5), 0);
  EXPECT_EQ(quantize_residual(42.0, 42), 0);
  EXPECT_EQ(reconstruct(100.7, 1), 100);
  EXPECT_EQ(reconstruct(4.5, 0), 5);
  EXPECT_EQ(round_half_up(-0.5), 0);
  EXPECT_EQ(round_half_up(-1.5), -1);
  EXPECT_EQ(round_half_up(2.5), 3);
}

TEST(Fdnet, QuantizerIdentityRandomized) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> yd(-255, 255), half(-510, 510);
  std::uniform_real_distribution<double> pd(-255.0, 255.0);
  int failures = 0;
  for (int i = 0; i < 1000000; ++i) {
    const int32_t y = yd(rng);
    // Every fourth pair is a forced half-integer tie, every fourth a 1/64 grid point.
    double p;
    switch (i % 4) {
      case 0: p = half(rng) * 0.5; break;
      case 1: p = snap64(static_cast<float>(pd(rng))); break;
      default: p = static_cast<float>(pd(rng));
    }
    const int32_t q = quantize_residual(p, y);
    if (reconstruct(p, q) != y) ++failures;
    if (std::abs(q) > 510) ++failures;
  }
  EXPECT_EQ(failures, 0);
}

TEST(Fdnet, ReconstructRejectsOutOfRange) {
  Plane<float> pred(2, 1, 250.0f);
  IntPlane q(2, 1);
  q.samples = {0, -10};
  EXPECT_EQ(testing::error_kind([&] { reconstruct(pred, q, channel_range(Channel::kY)); }),
            ErrorKind::kCorrupt);
}

TEST(Fdnet, Snap64) {
  EXPECT_EQ(snap64(1.0f / 128.0f), 1.0f / 64.0f);
  EXPECT_EQ(snap64(-1.0f / 128.0f), 0.0f);
  EXPECT_EQ(snap64(3.007f), 3.0f);
  EXPECT_EQ(snap64(3.01f), 3.015625f);
  std::mt19937 rng(3);
  std::uniform_real_distribution<float> d(-300, 300);
  for (int i = 0; i < 10000; ++i) {
    const float s = snap64(d(rng));
    EXPECT_EQ(s * 64.0f, std::round(s * 64.0f));
  }
}

// y enters branch B only through y restricted to the low-frequency mask.
TEST(Fdnet, HighBranchSeesOnlyLowRegionOfCurrentPlane) {
  const FdnetModel m = FdnetModel::create(tiny_arch(), 8);
  const auto set = subimages(testing::random_image(12, 12, 9));
  const int n = 7;  // (Y,b)
  const auto x = condition_stack(set, n);
  FrequencyMask mask(6, 6);
  for (size_t i = 0; i < mask.size(); ++i) mask.samples[i] = i % 3 == 0;
  IntPlane y = set.ordered(n - 1);
  const HfcOutputs base = hfc_forward(m, x, y, mask);

  IntPlane outside = y;
  outside.samples[1] = 255 - outside.samples[1];
  const HfcOutputs o = hfc_forward(m, x, outside, mask);
  EXPECT_EQ(o.prediction.samples, base.prediction.samples);
  EXPECT_EQ(o.pmf.probs, base.pmf.probs);

  IntPlane inside = y;
  inside.samples[3] = 255 - inside.samples[3];
  const HfcOutputs in = hfc_forward(m, x, inside, mask);
  EXPECT_NE(in.prediction.samples, base.prediction.samples);
}

TEST(Fdnet, DegenerateMasksAreWellFormed) {
  const FdnetModel m = FdnetModel::create(tiny_arch(), 9);
  const auto set = subimages(testing::random_image(8, 6, 10));
  const auto x = condition_stack(set, 9);
  const IntPlane& y = set.ordered(8);
  for (uint8_t v : {0, 1}) {
    const HfcOutputs out = hfc_forward(m, x, y, FrequencyMask(4, 3, v));
    EXPECT_EQ(out.prediction.size(), 12u);
    for (float p : out.prediction.samples) EXPECT_TRUE(std::isfinite(p));
    EXPECT_EQ(out.pmf.pixels, 12u);
  }
  // All-zero mask: the current plane has no influence at all.
  IntPlane other = y;
  for (auto& s : other.samples) s = -s;
  EXPECT_EQ(hfc_forward(m, x, y, FrequencyMask(4, 3, 0)).prediction.samples,
            hfc_forward(m, x, other, FrequencyMask(4, 3, 0)).prediction.samples);
}

TEST(Fdnet, PmfAtIsIndependentOfPixelSubset) {
  const FdnetModel m = FdnetModel::create(tiny_arch(), 10);
  const auto set = subimages(testing::random_image(40, 30, 11));
  const BranchEval e = eval_branch_a(m, 6, to_tensor(condition_stack(set, 6)));
  const size_t P = e.prediction.size();
  const PmfPlane all = pmf_at(m, e, all_pixels(P));
  std::vector<uint32_t> subset;
  for (uint32_t i = 0; i < P; i += 7) subset.push_back(i);
  for (uint32_t i = 3; i < P; i += 11) subset.push_back(i);
  const PmfPlane part = pmf_at(m, e, subset);
  for (size_t j = 0; j < subset.size(); ++j)
    for (int k = 0; k < all.symbols; ++k)
      ASSERT_EQ(part.at(j, k), all.at(subset[j], k)) << "pixel " << subset[j];
}

TEST(Fdnet, ForwardIsDeterministic) {
  const FdnetModel m = FdnetModel::create(tiny_arch(), 12);
  const auto set = subimages(testing::random_image(16, 16, 13));
  const auto x = condition_stack(set, 12);
  const LfcOutputs a = lfc_forward(m, x), b = lfc_forward(m, x);
  EXPECT_EQ(a.prediction.samples, b.prediction.samples);
  EXPECT_EQ(a.sigma.samples, b.sigma.samples);
  EXPECT_EQ(a.tau, b.tau);
  EXPECT_EQ(a.pmf.probs, b.pmf.probs);
}

TEST(Fdnet, ParameterCountsMatchStore) {
  for (Variant v : {Variant::kFull, Variant::kNoC2f}) {
    const ArchConfig a = tiny_arch(v);
    const FdnetModel m = FdnetModel::create(a, 1);
    size_t total = 0;
    for (int n = kFirstNetworkIndex; n <= kNumSubimages; ++n) {
      EXPECT_EQ(m.params.num_values(model_prefix(n) + "."), model_param_count(n, a));
      total += model_param_count(n, a);
    }
    EXPECT_EQ(m.params.num_values(), total);
  }
}

TEST(Fdnet, SingleBranchWidthMatchesParameterCount) {
  auto total = [](int w, Variant v) {
    size_t t = 0;
    for (int n = kFirstNetworkIndex; n <= kNumSubimages; ++n) t += model_param_count(n, {w, 4, v, {}});
    return static_cast<double>(t);
  };
  for (int width : {8, 16, 32}) {
    const int w = matched_single_branch_width(width, 4);
    const double full = total(width, Variant::kFull);
    EXPECT_GT(w, width);
    // No other width comes closer.
    for (int o : {w - 1, w + 1})
      EXPECT_LE(std::abs(total(w, Variant::kNoC2f) - full), std::abs(total(o, Variant::kNoC2f) - full));
    EXPECT_LT(std::abs(total(w, Variant::kNoC2f) - full) / full, 0.05) << width;
  }
}

TEST(Fdnet, NineIndependentParameterSets) {
  const FdnetModel m = FdnetModel::create(tiny_arch(), 1);
  for (int n = kFirstNetworkIndex; n <= kNumSubimages; ++n) {
    EXPECT_TRUE(m.params.contains(model_prefix(n) + ".a.conv0.w"));
    EXPECT_TRUE(m.params.contains(model_prefix(n) + ".b.pmf.w"));
  }
  EXPECT_FALSE(m.params.contains("s3.a.conv0.w"));
  EXPECT_FALSE(m.params.contains("s13.a.conv0.w"));
  EXPECT_NE(m.params.get("s4.a.conv0.w").value.data[0], m.params.get("s7.a.conv0.w").value.data[0]);
}

TEST(Fdnet, FixedThresholdVariantUsesStoredValue) {
  FdnetModel m = FdnetModel::create(tiny_arch(Variant::kFixedTau), 2);
  std::array<float, kNumNetworkCoded> taus{};
  for (int i = 0; i < kNumNetworkCoded; ++i) taus[i] = 0.5f + i;
  m.set_fixed_tau(taus);
  const auto set = subimages(testing::random_image(8, 8, 1));
  for (int n = kFirstNetworkIndex; n <= kNumSubimages; ++n)
    EXPECT_EQ(lfc_forward(m, condition_stack(set, n)).tau, taus[n - kFirstNetworkIndex]);
}

TEST(Fdnet, SingleBranchVariantHasNoDecomposition) {
  const FdnetModel m = FdnetModel::create(tiny_arch(Variant::kNoC2f), 2);
  EXPECT_FALSE(m.coarse_to_fine());
  EXPECT_FALSE(m.params.contains("s4.a.sigma.w"));
  const auto x = condition_stack(subimages(testing::random_image(8, 8, 1)), kYd);
  EXPECT_EQ(testing::error_kind([&] { lfc_forward(m, x); }), ErrorKind::kInput);
  const BranchEval e = eval_branch_a(m, kYd, to_tensor(x));
  EXPECT_EQ(e.prediction.size(), 16u);
  EXPECT_EQ(pmf_at(m, e, all_pixels(16)).symbols, 511);
}

TEST(Fdnet, ArchitectureSurvivesCheckpoint) {
  ArchConfig a{5, 3, Variant::kF2c, {2.0f, 3.0f, 4.0f}};
  const FdnetModel m = FdnetModel::create(a, 3);
  const auto bytes = nn::serialize_checkpoint(m.params);
  const FdnetModel back = FdnetModel::from_params(nn::to_store(nn::parse_checkpoint(bytes)));
  EXPECT_EQ(back.arch.width, 5);
  EXPECT_EQ(back.arch.depth, 3);
  EXPECT_EQ(back.arch.variant, Variant::kF2c);
  EXPECT_EQ(back.arch.gains.tau, 3.0f);
  const auto x = condition_stack(subimages(testing::random_image(8, 8, 2)), 10);
  EXPECT_EQ(lfc_forward(m, x).pmf.probs, lfc_forward(back, x).pmf.probs);
}

TEST(Fdnet, VariantNamesRoundTrip) {
  for (Variant v : {Variant::kFull, Variant::kNoC2f, Variant::kFixedTau, Variant::kNoLossMasking,
                    Variant::kF2c})
    EXPECT_EQ(parse_variant(variant_name(v)), v);
  EXPECT_EQ(testing::error_kind([] { parse_variant("bogus"); }), ErrorKind::kInput);
}

TEST(Fdnet, InputChannelMismatchIsRejected) {
  const FdnetModel m = FdnetModel::create(tiny_arch(), 1);
  auto x = condition_stack(subimages(testing::random_image(8, 8, 1)), kYd);
  x.planes.pop_back();
  EXPECT_EQ(testing::error_kind([&] { lfc_forward(m, x); }), ErrorKind::kInput);
}

}  // namespace
}  // namespace lcfd
