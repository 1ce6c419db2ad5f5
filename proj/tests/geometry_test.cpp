/* Copyright 2026 The posedet Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <cmath>

#include <gtest/gtest.h>

#include "posedet/geometry.hpp"
#include "posedet/random.hpp"

namespace posedet {
namespace {

BoundingBox random_box(Rng& rng) {
  const double x = rng.uniform(-50, 50), y = rng.uniform(-50, 50);
  return {x, y, x + rng.uniform(0.5, 40), y + rng.uniform(0.5, 40)};
}

TEST(BoundingBox, RejectsDegenerateAndNonFinite) {
  EXPECT_THROW(BoundingBox(0, 0, 0, 5), Error);
  EXPECT_THROW(BoundingBox(0, 0, 5, -1), Error);
  EXPECT_THROW(BoundingBox(0, NAN, 5, 5), Error);
  try {
    BoundingBox(1, 1, 1, 1);
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidBox);
  }
  const BoundingBox b(2, 4, 10, 20);
  EXPECT_DOUBLE_EQ(b.area(), 128.0);
  EXPECT_EQ(b.center(), (Point2{6, 12}));
}

TEST(Iou, HandComputedCases) {
  const BoundingBox b(0, 0, 10, 10);
  EXPECT_DOUBLE_EQ(iou(b, b), 1.0);
  EXPECT_DOUBLE_EQ(iou(b, {20, 20, 30, 30}), 0.0);
  // Intersection 50, union 150.
  EXPECT_NEAR(iou(b, {5, 0, 15, 10}), 1.0 / 3.0, 1e-15);
  // Touching edges do not overlap.
  EXPECT_DOUBLE_EQ(iou(b, {10, 0, 20, 10}), 0.0);
}

TEST(Iou, SymmetricAndBounded) {
  Rng rng(11);
  for (int i = 0; i < 2000; ++i) {
    const BoundingBox a = random_box(rng), b = random_box(rng);
    const double v = iou(a, b);
    EXPECT_EQ(v, iou(b, a));
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
    if (!(a == b)) EXPECT_LT(v, 1.0);
  }
}

TEST(GeometricFeatures, DirectFormula) {
  const auto g = geometric_features({2, 4, 10, 20});
  EXPECT_DOUBLE_EQ(g.lx, 6.0);
  EXPECT_DOUBLE_EQ(g.ly, 12.0);
  EXPECT_NEAR(g.a, 0.69315, 1e-5);
  EXPECT_NEAR(g.r, 3.17805, 1e-5);
  EXPECT_DOUBLE_EQ(geometric_features({0, 0, 7, 7}).a, 0.0);
  EXPECT_DOUBLE_EQ(geometric_features({0, 0, 1, 1}).r, std::log(2.0));
}

TEST(GeometricFeatures, TranslationAndScale) {
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const BoundingBox b = random_box(rng);
    const double dx = rng.uniform(-100, 100), dy = rng.uniform(-100, 100), s = rng.uniform(0.1, 10);
    const auto g = geometric_features(b);
    const auto t = geometric_features(b.translated(dx, dy));
    EXPECT_NEAR(t.a, g.a, 1e-9);
    EXPECT_NEAR(t.r, g.r, 1e-9);
    EXPECT_NEAR(t.lx, g.lx + dx, 1e-9);
    EXPECT_NEAR(t.ly, g.ly + dy, 1e-9);
    const auto sc = geometric_features(b.scaled(s));
    EXPECT_NEAR(sc.a, g.a, 1e-9);
    EXPECT_NEAR(sc.r, g.r + std::log(s), 1e-9);
  }
}

TEST(GeometricFeatures, BoxFromFeaturesInverts) {
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    const BoundingBox b = random_box(rng);
    const BoundingBox back = box_from_features(geometric_features(b));
    EXPECT_NEAR(back.x1(), b.x1(), 1e-9);
    EXPECT_NEAR(back.y1(), b.y1(), 1e-9);
    EXPECT_NEAR(back.x2(), b.x2(), 1e-9);
    EXPECT_NEAR(back.y2(), b.y2(), 1e-9);
  }
}

TEST(Offset, Subtraction) {
  EXPECT_EQ(offset({5, 5}, {5, 5}), (Point2{0, 0}));
  EXPECT_EQ(offset({10, 4}, {6, 10}), (Point2{4, -6}));
  Rng rng(9);
  for (int i = 0; i < 100; ++i) {
    const Point2 c{rng.uniform(-9, 9), rng.uniform(-9, 9)}, t{rng.uniform(-9, 9), rng.uniform(-9, 9)};
    const Point2 back = offset(c, t) + t;
    EXPECT_NEAR(back.x, c.x, 1e-12);
    EXPECT_NEAR(back.y, c.y, 1e-12);
  }
}

TEST(Joints, CanonicalNames) {
  ASSERT_EQ(kJointNames.size(), 14u);
  EXPECT_EQ(joint_index("head"), 0);
  EXPECT_EQ(joint_index("right_foot"), 13);
  EXPECT_FALSE(joint_index("tail").has_value());
  for (int j = 0; j < 14; ++j) EXPECT_EQ(joint_index(joint_name(j)), j);
  EXPECT_THROW(joint_name(14), Error);
}

TEST(Pose, VisibilityAndTranslation) {
  Pose p;
  p.joints[3] = {1, 2};
  p.visible[4] = false;
  EXPECT_TRUE(p.has(3));
  EXPECT_FALSE(p.has(4));
  EXPECT_FALSE(p.has(14));
  EXPECT_EQ(p.translated(1, 1)[3], (Point2{2, 3}));
}

TEST(Random, MixSeedSeparatesStreams) {
  EXPECT_NE(mix_seed(1, 2), mix_seed(1, 3));
  EXPECT_NE(mix_seed(1, 2, 0), mix_seed(2, 1, 0));
  Rng a(42), b(42);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(a.next(), b.next());
  Rng r(1);
  double sum = 0, sq = 0;
  for (int i = 0; i < 20000; ++i) {
    const double x = r.normal();
    sum += x;
    sq += x * x;
  }
  EXPECT_NEAR(sum / 20000, 0.0, 0.05);
  EXPECT_NEAR(sq / 20000, 1.0, 0.05);
}

}  // namespace
}  // namespace posedet
