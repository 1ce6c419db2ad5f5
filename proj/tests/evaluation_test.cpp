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
#include <vector>

#include <gtest/gtest.h>

#include "posedet/evaluation.hpp"
#include "posedet/random.hpp"

namespace posedet {
namespace {

LabelMap blank(int w, int h) {
  LabelMap m{w, h, std::vector<int>(static_cast<std::size_t>(w * h), 0), {{1, "bag"}, {2, "purse"}, {3, "skin"}}};
  return m;
}

void paint(LabelMap& m, int r0, int r1, int c0, int c1, int id) {
  for (int r = r0; r <= r1; ++r) {
    for (int c = c0; c <= c1; ++c) m.labels[static_cast<std::size_t>(r * m.width + c)] = id;
  }
}

const std::map<std::string, std::string> kMerge{{"bag", "bag"}, {"purse", "bag"}};

TEST(GtFromLabelMap, PixelExtents) {
  LabelMap m = blank(10, 8);
  paint(m, 2, 3, 5, 6, 1);
  const auto gt = gt_from_labelmap(m, kMerge);
  ASSERT_EQ(gt.size(), 1u);
  EXPECT_EQ(gt[0].label, "bag");
  EXPECT_EQ(gt[0].box, BoundingBox(5, 2, 7, 4));
  EXPECT_TRUE(gt_from_labelmap(blank(10, 8), kMerge).empty());
}

TEST(GtFromLabelMap, MergesBlobsAndClasses) {
  LabelMap m = blank(20, 20);
  paint(m, 1, 2, 1, 2, 1);
  paint(m, 15, 16, 10, 12, 2);
  paint(m, 5, 6, 5, 6, 3);
  const auto gt = gt_from_labelmap(m, kMerge);
  ASSERT_EQ(gt.size(), 1u);
  EXPECT_EQ(gt[0].box, BoundingBox(1, 1, 13, 17));
  const std::vector<std::string> excluded{"skin"};
  const auto ex = excluded_from_labelmap(m, excluded);
  ASSERT_EQ(ex.size(), 1u);
  EXPECT_EQ(ex[0].box, BoundingBox(5, 5, 7, 7));
}

TEST(GtFromLabelMap, BoxesContainEveryPixel) {
  Rng rng(2);
  for (int t = 0; t < 30; ++t) {
    LabelMap m = blank(25, 30);
    for (auto& v : m.labels) v = rng.bernoulli(0.05) ? static_cast<int>(1 + rng.index(3)) : 0;
    const auto gt = gt_from_labelmap(m, kMerge);
    for (int r = 0; r < m.height; ++r) {
      for (int c = 0; c < m.width; ++c) {
        const int v = m.at(r, c);
        if (v != 1 && v != 2) continue;
        ASSERT_EQ(gt.size(), 1u);
        EXPECT_LE(gt[0].box.x1(), c);
        EXPECT_GE(gt[0].box.x2(), c + 1);
        EXPECT_LE(gt[0].box.y1(), r);
        EXPECT_GE(gt[0].box.y2(), r + 1);
      }
    }
  }
}

TEST(GtFromLabelMap, UnknownLabel) {
  LabelMap m = blank(4, 4);
  m.labels[5] = 9;
  try {
    gt_from_labelmap(m, kMerge);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UnknownLabel);
  }
}

TEST(ProposalStats, HandCounts) {
  const BoundingBox gt(0, 0, 10, 10);
  std::vector<EvalImage> same{{"a", {gt}, {{"bag", gt}}}};
  auto st = proposal_stats(same);
  EXPECT_TRUE(st.precision_defined);
  EXPECT_EQ(st.precision, 1.0);
  EXPECT_EQ(st.recall.at("bag"), 1.0);

  std::vector<EvalImage> none{{"a", {}, {{"bag", gt}}}};
  st = proposal_stats(none);
  EXPECT_FALSE(st.precision_defined);
  EXPECT_EQ(st.precision, 0.0);
  EXPECT_EQ(st.recall.at("bag"), 0.0);

  std::vector<EvalImage> three{{"a", {{0, 0, 10, 6}, {50, 50, 60, 60}, {30, 0, 40, 10}}, {{"bag", gt}}}};
  st = proposal_stats(three);
  EXPECT_NEAR(st.precision, 1.0 / 3.0, 1e-15);
  EXPECT_EQ(st.recall.at("bag"), 1.0);
  EXPECT_EQ(st.mean_proposals_per_image, 3.0);
}

Detection d(const std::string& img, std::size_t id, BoundingBox b, double s) { return {img, "bag", id, b, s, {}}; }

TEST(PrCurve, ThreeDetectionExample) {
  GroundTruthIndex gt{{"a", {{0, 0, 10, 10}, {20, 0, 30, 10}}}};
  std::vector<Detection> dets{d("a", 0, {0, 0, 10, 10}, 0.9), d("a", 1, {50, 50, 60, 60}, 0.8),
                              d("a", 2, {20, 0, 30, 10}, 0.7)};
  const auto c = pr_curve(dets, gt);
  ASSERT_TRUE(c.ap.has_value());
  EXPECT_NEAR(*c.ap, 0.5 * 1.0 + 0.5 * (2.0 / 3.0), 1e-12);
  ASSERT_EQ(c.points.size(), 3u);
  EXPECT_EQ(c.points[0].recall, 0.5);
  EXPECT_EQ(c.points[1].precision, 0.5);
  EXPECT_NEAR(c.points[2].precision, 2.0 / 3.0, 1e-15);
  EXPECT_EQ(c.true_positive, (std::vector<bool>{true, false, true}));
}

TEST(PrCurve, PerfectDuplicateAndUndefined) {
  GroundTruthIndex gt{{"a", {{0, 0, 10, 10}}}, {"b", {{0, 0, 10, 10}}}};
  std::vector<Detection> perfect{d("a", 0, {0, 0, 10, 10}, 2), d("b", 0, {0, 0, 10, 9}, 1)};
  EXPECT_EQ(*pr_curve(perfect, gt).ap, 1.0);
  std::vector<Detection> dup{d("a", 0, {0, 0, 10, 10}, 2), d("a", 1, {0, 0, 10, 10}, 1)};
  EXPECT_EQ(pr_curve(dup, gt).true_positive, (std::vector<bool>{true, false}));
  EXPECT_FALSE(pr_curve(dup, {}).ap.has_value());
  EXPECT_FALSE(pr_curve(dup, {{"a", {}}}).ap.has_value());
}

TEST(PrCurve, InvariantToMonotoneTransform) {
  Rng rng(5);
  for (int t = 0; t < 50; ++t) {
    GroundTruthIndex gt;
    std::vector<Detection> dets;
    for (int i = 0; i < 3; ++i) {
      const std::string img = "i" + std::to_string(i);
      for (int k = 0; k < 2; ++k) gt[img].push_back({k * 20.0, 0, k * 20.0 + 10, 10});
      for (std::size_t k = 0; k < 5; ++k) {
        const double x = rng.uniform(0, 30);
        dets.push_back(d(img, k, {x, 0, x + 10, 10}, rng.normal()));
      }
    }
    auto moved = dets;
    for (auto& x : moved) x.score = std::exp(3 * x.score) + 7;
    const double ap = *pr_curve(dets, gt).ap;
    EXPECT_NEAR(*pr_curve(moved, gt).ap, ap, 1e-12);
    EXPECT_GE(ap, 0.0);
    EXPECT_LE(ap, 1.0);
  }
}

TEST(MeanAp, DefinedClassesOnly) {
  std::map<std::string, PrCurve> curves;
  curves["a"].ap = 0.2;
  curves["b"].ap = 0.4;
  curves["c"];
  const auto m = mean_ap(curves);
  EXPECT_NEAR(m.value, 0.3, 1e-15);
  EXPECT_EQ(m.undefined, (std::vector<std::string>{"c"}));
  std::map<std::string, PrCurve> one;
  one["x"].ap = 0.7;
  EXPECT_EQ(mean_ap(one).value, 0.7);
  std::map<std::string, PrCurve> empty{{"x", {}}};
  EXPECT_THROW(mean_ap(empty), Error);
}

TEST(EvaluateDetections, SplitsByClass) {
  std::vector<EvalImage> imgs{{"a", {}, {{"bag", {0, 0, 10, 10}}, {"hat", {20, 0, 30, 10}}}}};
  std::vector<Detection> dets{{"a", "bag", 0, {0, 0, 10, 10}, 1, {}}, {"a", "hat", 0, {0, 0, 10, 10}, 1, {}}};
  const std::vector<std::string> classes{"bag", "hat", "belt"};
  const auto curves = evaluate_detections(dets, imgs, classes);
  EXPECT_EQ(*curves.at("bag").ap, 1.0);
  EXPECT_EQ(*curves.at("hat").ap, 0.0);
  EXPECT_FALSE(curves.at("belt").ap.has_value());
}

}  // namespace
}  // namespace posedet
