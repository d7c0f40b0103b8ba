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

#include "lcfd/colorspace.hpp"
#include "lcfd/subimage.hpp"
#include "test_support.hpp"

namespace lcfd {
namespace {

TEST(Split, TwoByTwo) {
  YuvImage yuv = rct_forward(testing::random_image(2, 2, 1));
  const SubimageSet s = split(yuv);
  const IntPlane& y = yuv.plane(Channel::kY);
  EXPECT_EQ(s.plane({Channel::kY, Location::kA}).samples[0], y.at(0, 0));
  EXPECT_EQ(s.plane({Channel::kY, Location::kB}).samples[0], y.at(1, 0));
  EXPECT_EQ(s.plane({Channel::kY, Location::kC}).samples[0], y.at(0, 1));
  EXPECT_EQ(s.plane({Channel::kY, Location::kD}).samples[0], y.at(1, 1));
}

TEST(Split, StrideTwoOracle) {
  const YuvImage yuv = rct_forward(testing::random_image(4, 4, 2));
  const SubimageSet s = split(yuv);
  const int off[4][2] = {{0, 0}, {0, 1}, {1, 0}, {1, 1}};  // (row, col) per a, b, c, d
  for (int c = 0; c < 3; ++c)
    for (int l = 0; l < 4; ++l)
      for (int r = 0; r < 2; ++r)
        for (int q = 0; q < 2; ++q)
          EXPECT_EQ(s.planes[c][l].at(q, r), yuv.planes[c].at(2 * q + off[l][1], 2 * r + off[l][0]));
}

TEST(Split, ConstantImage) {
  RgbImage img(6, 4);
  std::fill(img.samples.begin(), img.samples.end(), 77);
  const SubimageSet s = split(rct_forward(img));
  for (const auto& ch : s.planes)
    for (const auto& p : ch)
      for (int32_t v : p.samples) EXPECT_EQ(v, p.samples[0]);
}

TEST(Split, Errors) {
  EXPECT_THROW(split(rct_forward(testing::random_image(3, 4, 1))), Error);
  EXPECT_THROW(split(rct_forward(testing::random_image(4, 5, 1))), Error);
}

TEST(Merge, RoundTrips) {
  const YuvImage yuv = rct_forward(testing::random_image(8, 6, 3));
  EXPECT_EQ(merge(split(yuv)), yuv);
  const auto natural = load_image(std::string(LCFD_DATA_DIR) + "/natural/ihc_256x256.ppm");
  const YuvImage ny = rct_forward(natural);
  EXPECT_EQ(merge(split(ny)), ny);
}

TEST(Merge, ZeroAndInconsistent) {
  SubimageSet s;
  s.width = 4;
  s.height = 2;
  for (auto& ch : s.planes)
    for (auto& p : ch) p = IntPlane(2, 1);
  const YuvImage z = merge(s);
  for (const auto& p : z.planes)
    for (int32_t v : p.samples) EXPECT_EQ(v, 0);
  s.planes[1][2] = IntPlane(1, 1);
  EXPECT_THROW(merge(s), Error);
}

TEST(CodingOrder, Positions) {
  const auto o = coding_order();
  for (int k = 0; k < 3; ++k) EXPECT_EQ(o[k].location, Location::kA);
  EXPECT_EQ(o[0].channel, Channel::kY);
  EXPECT_EQ(o[3].name(), "(Y,d)");
  EXPECT_EQ(o[6].name(), "(Y,b)");
  EXPECT_EQ(o[11].name(), "(V,c)");
  const char* expected[] = {"(Y,a)", "(U,a)", "(V,a)", "(Y,d)", "(U,d)", "(V,d)",
                            "(Y,b)", "(U,b)", "(V,b)", "(Y,c)", "(U,c)", "(V,c)"};
  for (int k = 0; k < 12; ++k) EXPECT_EQ(o[k].name(), expected[k]);
}

TEST(ConditionStack, Cardinality) {
  const SubimageSet s = split(rct_forward(testing::random_image(6, 6, 4)));
  const auto st4 = condition_stack(s, 4);
  ASSERT_EQ(st4.planes.size(), 3u);
  for (int k = 0; k < 3; ++k) EXPECT_EQ(st4.ids[k].location, Location::kA);
  EXPECT_EQ(condition_stack(s, 12).planes.size(), 11u);
  const auto st2 = condition_stack(s, 2);
  ASSERT_EQ(st2.planes.size(), 1u);
  EXPECT_EQ(st2.ids[0].name(), "(Y,a)");
  EXPECT_THROW(condition_stack(s, 1), Error);
  EXPECT_THROW(condition_stack(s, 13), Error);
}

TEST(ConditionStack, NormalizedAndCausal) {
  SubimageSet s = split(rct_forward(testing::random_image(6, 6, 5)));
  const auto st = condition_stack(s, 7);
  const IntPlane& u = s.ordered(1);
  for (size_t i = 0; i < u.size(); ++i)
    EXPECT_FLOAT_EQ(st.planes[1].samples[i], static_cast<float>(u.samples[i] / 255.0));
  // Changing planes at index >= N-1 leaves the stack untouched.
  for (int k = 6; k < 12; ++k)
    for (auto& v : s.ordered(k).samples) v = 0;
  const auto st2 = condition_stack(s, 7);
  for (size_t k = 0; k < st.planes.size(); ++k) EXPECT_EQ(st.planes[k], st2.planes[k]);
}

}  // namespace
}  // namespace lcfd
