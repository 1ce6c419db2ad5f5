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
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "posedet/priors.hpp"
#include "posedet/random.hpp"

namespace posedet {
namespace {

std::vector<Point2> blob(Rng& rng, Point2 mean, double sd, int n) {
  std::vector<Point2> out;
  for (int i = 0; i < n; ++i) out.push_back({rng.normal(mean.x, sd), rng.normal(mean.y, sd)});
  return out;
}

// Bivariate normal density written out with the explicit inverse.
double ref_density(Point2 x, Point2 m, double sxx, double sxy, double syy) {
  const double det = sxx * syy - sxy * sxy;
  const double ixx = syy / det, ixy = -sxy / det, iyy = sxx / det;
  const double dx = x.x - m.x, dy = x.y - m.y;
  return std::exp(-0.5 * (ixx * dx * dx + 2 * ixy * dx * dy + iyy * dy * dy)) / (2 * std::numbers::pi * std::sqrt(det));
}

double ref_gmm_log(const Gmm2D& g, Point2 x) {
  double p = 0;
  for (const auto& c : g.components) p += c.weight * ref_density(x, c.mean, c.cov.xx, c.cov.xy, c.cov.yy);
  return std::log(p);
}

TEST(Gaussian1D, ClosedForm) {
  const std::vector<double> xs{0, 1, 2};
  const auto g = fit_gaussian_1d(xs);
  EXPECT_DOUBLE_EQ(g.mean, 1.0);
  EXPECT_DOUBLE_EQ(g.variance, 2.0 / 3.0);
  const std::vector<double> same{4, 4, 4, 4};
  EXPECT_EQ(fit_gaussian_1d(same, 1e-4).variance, 1e-4);
  const std::vector<double> shifted{10, 11, 12};
  EXPECT_DOUBLE_EQ(fit_gaussian_1d(shifted).mean, 11.0);
  EXPECT_NEAR(fit_gaussian_1d(shifted).variance, 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(g.log_density(1.0), -0.5 * std::log(2 * std::numbers::pi * 2.0 / 3.0), 1e-12);
}

TEST(Gaussian1D, Errors) {
  const std::vector<double> one{1};
  const std::vector<double> bad{1, NAN};
  EXPECT_THROW(fit_gaussian_1d(one), Error);
  EXPECT_THROW(fit_gaussian_1d(bad), Error);
}

TEST(Cov2, EigenvalueFloor) {
  const Cov2 c{2.0, 0.9, 0.5};
  EXPECT_EQ(floor_eigenvalues(c, 1e-4), c);
  const Cov2 singular{1.0, 1.0, 1.0};
  const Cov2 f = floor_eigenvalues(singular, 0.01);
  const auto [l1, l2] = f.eigenvalues();
  EXPECT_NEAR(l1, 2.0, 1e-12);
  EXPECT_NEAR(l2, 0.01, 1e-12);
  const Cov2 zero{0.0, 0.0, 0.0};
  EXPECT_NEAR(floor_eigenvalues(zero, 0.5).eigenvalues().second, 0.5, 1e-12);
}

TEST(GmmEm, SingleComponentIsSampleMoments) {
  Rng rng(4);
  auto xs = blob(rng, {3, -2}, 2.0, 300);
  for (auto& p : xs) p.y += 0.5 * p.x;
  double mx = 0, my = 0;
  for (const auto& p : xs) {
    mx += p.x;
    my += p.y;
  }
  mx /= xs.size();
  my /= xs.size();
  double sxx = 0, sxy = 0, syy = 0;
  for (const auto& p : xs) {
    sxx += (p.x - mx) * (p.x - mx);
    sxy += (p.x - mx) * (p.y - my);
    syy += (p.y - my) * (p.y - my);
  }
  const double n = static_cast<double>(xs.size());
  const auto fit = gmm_em_fit(xs, 1, 7);
  ASSERT_EQ(fit.gmm.size(), 1u);
  const auto& c = fit.gmm.components[0];
  EXPECT_NEAR(c.weight, 1.0, 1e-12);
  EXPECT_NEAR(c.mean.x, mx, 1e-9);
  EXPECT_NEAR(c.mean.y, my, 1e-9);
  EXPECT_NEAR(c.cov.xx, sxx / n, 1e-9);
  EXPECT_NEAR(c.cov.xy, sxy / n, 1e-9);
  EXPECT_NEAR(c.cov.yy, syy / n, 1e-9);
  double ll = 0;
  for (const auto& p : xs) ll += ref_gmm_log(fit.gmm, p);
  EXPECT_NEAR(fit.log_likelihood, ll, 1e-8 * std::abs(ll));
}

TEST(GmmEm, RecoversTwoSeparatedClusters) {
  Rng rng(21);
  auto xs = blob(rng, {-5, 0}, 1.0, 100);
  auto right = blob(rng, {5, 0}, 1.0, 100);
  xs.insert(xs.end(), right.begin(), right.end());
  const auto fit = gmm_em_fit(xs, 2, 3);
  ASSERT_EQ(fit.gmm.size(), 2u);
  auto a = fit.gmm.components[0], b = fit.gmm.components[1];
  if (a.mean.x > b.mean.x) std::swap(a, b);
  EXPECT_NEAR(a.mean.x, -5, 0.5);
  EXPECT_NEAR(a.mean.y, 0, 0.5);
  EXPECT_NEAR(b.mean.x, 5, 0.5);
  EXPECT_NEAR(b.mean.y, 0, 0.5);
  EXPECT_NEAR(a.weight, 0.5, 0.1);
  EXPECT_NEAR(a.weight + b.weight, 1.0, 1e-9);
}

TEST(GmmEm, TraceIsMonotone) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    std::vector<Point2> xs;
    for (int i = 0; i < 120; ++i) xs.push_back({rng.uniform(-10, 10), rng.normal(0, 1 + std::abs(rng.normal()))});
    for (int m = 1; m <= 4; ++m) {
      const auto fit = gmm_em_fit(xs, m, seed);
      for (std::size_t i = 1; i < fit.trace.size(); ++i) {
        EXPECT_GE(fit.trace[i], fit.trace[i - 1] - 1e-8 * std::max(1.0, std::abs(fit.trace[i - 1])));
      }
      double wsum = 0;
      for (const auto& c : fit.gmm.components) {
        wsum += c.weight;
        EXPECT_GE(c.cov.eigenvalues().second, 1e-4 * (1 - 1e-9));
      }
      EXPECT_NEAR(wsum, 1.0, 1e-9);
    }
  }
}

TEST(GmmEm, DeterministicForSeed) {
  Rng rng(8);
  const auto xs = blob(rng, {0, 0}, 3.0, 80);
  EXPECT_EQ(gmm_em_fit(xs, 3, 99).gmm, gmm_em_fit(xs, 3, 99).gmm);
}

TEST(GmmEm, TooFewSamples) {
  Rng rng(1);
  const auto xs = blob(rng, {0, 0}, 1.0, 7);
  EXPECT_THROW(gmm_em_fit(xs, 2, 0), Error);
  EXPECT_THROW(gmm_em_fit(xs, 0, 0), Error);
  EXPECT_NO_THROW(gmm_em_fit(xs, 1, 0));
}

TEST(GmmEm, CollapsedComponentIsRemoved) {
  Rng rng(2);
  auto xs = blob(rng, {0, 0}, 1.0, 150);
  auto far = blob(rng, {40, 40}, 0.5, 3);
  xs.insert(xs.end(), far.begin(), far.end());
  PriorOptions opt;
  opt.mass_floor_fraction = 0.05;
  const auto fit = gmm_em_fit(xs, 2, 5, opt);
  EXPECT_GE(fit.removed_components, 1);
  EXPECT_EQ(fit.gmm.size(), 1u);
  EXPECT_EQ(fit.requested_components, 2);
}

TEST(GmmEm, DensityIntegratesToOne) {
  Rng rng(6);
  auto xs = blob(rng, {-4, 1}, 1.0, 100);
  auto ys = blob(rng, {3, -2}, 1.5, 100);
  xs.insert(xs.end(), ys.begin(), ys.end());
  const auto fit = gmm_em_fit(xs, 2, 1);
  double lo_x = 1e9, hi_x = -1e9, lo_y = 1e9, hi_y = -1e9;
  for (const auto& c : fit.gmm.components) {
    const double sx = 6 * std::sqrt(c.cov.xx), sy = 6 * std::sqrt(c.cov.yy);
    lo_x = std::min(lo_x, c.mean.x - sx);
    hi_x = std::max(hi_x, c.mean.x + sx);
    lo_y = std::min(lo_y, c.mean.y - sy);
    hi_y = std::max(hi_y, c.mean.y + sy);
  }
  Rng mc(77);
  const int n = 200000;
  double sum = 0;
  for (int i = 0; i < n; ++i) sum += std::exp(fit.gmm.log_density({mc.uniform(lo_x, hi_x), mc.uniform(lo_y, hi_y)}));
  const double integral = sum / n * (hi_x - lo_x) * (hi_y - lo_y);
  EXPECT_GE(integral, 0.97);
  EXPECT_LE(integral, 1.03);
}

TEST(Bic, Arithmetic) {
  EXPECT_DOUBLE_EQ(bic(0.0, 1, 1), 0.0);
  EXPECT_NEAR(bic(-50.0, 2, 100) - bic(-50.0, 1, 100), 6 * std::log(100.0), 1e-12);
  EXPECT_DOUBLE_EQ(bic(-10.0, 1, 1), 20.0);
}

TEST(SelectComponents, PicksGeneratingCount) {
  Rng rng(13);
  const auto tight = blob(rng, {1, 1}, 0.5, 200);
  EXPECT_EQ(select_components(tight, 0, {}, 1).gmm.size(), 1u);
  auto two = blob(rng, {-5, 0}, 1.0, 100);
  auto right = blob(rng, {5, 0}, 1.0, 100);
  two.insert(two.end(), right.begin(), right.end());
  const auto c = select_components(two, 4, {}, 2);
  EXPECT_EQ(c.gmm.size(), 2u);
  EXPECT_EQ(c.joint_id, 4);
  EXPECT_EQ(c.num_samples, 200u);
  ASSERT_EQ(c.bic_table.size(), 5u);
  // The selected entry has the smallest BIC in the table.
  for (const auto& e : c.bic_table) EXPECT_GE(e.bic, c.bic);
  PriorOptions one;
  one.m_max = 1;
  EXPECT_EQ(select_components(two, 0, one, 2).gmm.size(), 1u);
}

TEST(SelectComponents, SkipsCountsWithTooFewSamples) {
  Rng rng(14);
  const auto xs = blob(rng, {0, 0}, 1.0, 9);
  const auto c = select_components(xs, 0, {}, 3);
  EXPECT_EQ(c.bic_table.size(), 2u);
}

JointPriorCandidate candidate(int id, double ll) {
  JointPriorCandidate c;
  c.joint_id = id;
  c.train_log_likelihood = ll;
  return c;
}

TEST(SelectJoints, RanksByLikelihoodWithIdTieBreak) {
  std::vector<JointPriorCandidate> c{candidate(0, -10), candidate(1, -3), candidate(2, -5), candidate(3, -3)};
  EXPECT_EQ(select_joints(c), (std::vector<int>{1, 3}));
  std::vector<JointPriorCandidate> same;
  for (int j = 0; j < 14; ++j) same.push_back(candidate(13 - j, -7));
  EXPECT_EQ(select_joints(same), (std::vector<int>{0, 1}));
  for (auto& x : c) x.train_log_likelihood += 1234.5;
  EXPECT_EQ(select_joints(c), (std::vector<int>{1, 3}));
  std::vector<JointPriorCandidate> single{candidate(6, -1)};
  EXPECT_EQ(select_joints(single), (std::vector<int>{6}));
  EXPECT_THROW(select_joints(std::vector<JointPriorCandidate>{}), Error);
}

ClassPriorModel toy_model() {
  ClassPriorModel m;
  m.class_name = "bag";
  m.aspect = {0.2, 0.04};
  m.perimeter = {4.0, 0.09};
  m.joints.push_back({8, Gmm2D{{{0.3, {10, 5}, {4, 1, 3}}, {0.7, {-8, 2}, {2, -0.5, 5}}}}, -6.5});
  m.joints.push_back({9, Gmm2D{{{1.0, {0, 20}, {9, 0, 9}}}}, -5.0});
  return m;
}

TEST(LogPrior, EqualsSumOfIndependentFactors) {
  const ClassPriorModel m = toy_model();
  Rng rng(10);
  for (int i = 0; i < 50; ++i) {
    Pose pose;
    for (auto& j : pose.joints) j = {rng.uniform(0, 100), rng.uniform(0, 200)};
    const double x = rng.uniform(0, 100), y = rng.uniform(0, 200);
    const BoundingBox b(x, y, x + rng.uniform(5, 40), y + rng.uniform(5, 40));
    const auto g = geometric_features(b);
    auto gauss = [](double v, double mu, double var) {
      return -0.5 * std::log(2 * std::numbers::pi * var) - (v - mu) * (v - mu) / (2 * var);
    };
    const double expected = gauss(g.a, 0.2, 0.04) + gauss(g.r, 4.0, 0.09) +
                            ref_gmm_log(m.joints[0].gmm, {g.lx - pose[8].x, g.ly - pose[8].y}) +
                            ref_gmm_log(m.joints[1].gmm, {g.lx - pose[9].x, g.ly - pose[9].y});
    EXPECT_NEAR(log_prior(m, g, pose), expected, 1e-10 * std::max(1.0, std::abs(expected)));
    const auto t = prior_terms(m, g, pose);
    EXPECT_NEAR(t.total(), t.log_aspect + t.log_perimeter + t.joints[0].log_density + t.joints[1].log_density, 1e-10);

    // Moving the person and the box together leaves the center terms alone.
    const double dx = rng.uniform(-30, 30), dy = rng.uniform(-30, 30);
    const auto moved = prior_terms(m, geometric_features(b.translated(dx, dy)), pose.translated(dx, dy));
    EXPECT_NEAR(moved.log_center(), t.log_center(), 1e-9);
  }
}

TEST(LogPrior, MissingJointFallsBackOrThrows) {
  const ClassPriorModel m = toy_model();
  Pose pose;
  pose.visible[9] = false;
  const auto g = geometric_features({10, 10, 30, 40});
  const auto t = prior_terms(m, g, pose);
  ASSERT_EQ(t.joints.size(), 2u);
  EXPECT_FALSE(t.joints[0].fallback);
  EXPECT_TRUE(t.joints[1].fallback);
  EXPECT_EQ(t.joints[1].log_density, -5.0);
  EXPECT_THROW(prior_terms(m, g, pose, MissingJointPolicy::Error), Error);
}

std::vector<PriorSample> anchored_samples(Rng& rng, const std::string& label, int n, int anchor, Point2 off,
                                          double a_mean, double r_mean) {
  std::vector<PriorSample> out;
  for (int i = 0; i < n; ++i) {
    Pose pose;
    for (auto& j : pose.joints) j = {rng.uniform(0, 300), rng.uniform(0, 600)};
    GeometricFeatures g{pose[anchor].x + rng.normal(off.x, 2), pose[anchor].y + rng.normal(off.y, 2),
                        rng.normal(a_mean, 0.1), rng.normal(r_mean, 0.05)};
    out.push_back({box_from_features(g), pose, label});
  }
  return out;
}

TEST(FitClassPriors, RecoversGeneratingParameters) {
  Rng rng(31);
  auto samples = anchored_samples(rng, "hat", 150, 0, {0, -20}, -0.4, 4.5);
  const std::vector<std::string> classes{"hat", "shoes"};
  PriorOptions opt;
  opt.seed = 5;
  const auto fit = fit_class_priors(samples, classes, opt);
  ASSERT_EQ(fit.models.size(), 1u);
  ASSERT_EQ(fit.warnings.size(), 1u);
  EXPECT_NE(fit.warnings[0].find("shoes"), std::string::npos);
  const auto& m = fit.models.at("hat");
  // Within three standard errors of the generating means.
  EXPECT_NEAR(m.aspect.mean, -0.4, 3 * 0.1 / std::sqrt(150.0));
  EXPECT_NEAR(m.perimeter.mean, 4.5, 3 * 0.05 / std::sqrt(150.0));
  EXPECT_EQ(m.selected_joint_ids().size(), 2u);
  EXPECT_EQ(m.selected_joint_ids()[0], 0);
  EXPECT_EQ(m.candidates.size(), 14u);
  EXPECT_EQ(m.num_samples, 150u);
}

TEST(FitClassPriors, WorkerCountDoesNotChangeResult) {
  Rng rng(32);
  auto samples = anchored_samples(rng, "bag", 60, 6, {5, 10}, 0.1, 4.0);
  auto more = anchored_samples(rng, "belt", 40, 8, {20, 0}, -1.5, 4.4);
  samples.insert(samples.end(), more.begin(), more.end());
  const std::vector<std::string> classes{"bag", "belt"};
  PriorOptions one, many;
  one.seed = many.seed = 17;
  many.workers = 4;
  const auto a = fit_class_priors(samples, classes, one);
  const auto b = fit_class_priors(samples, classes, many);
  EXPECT_EQ(a.models, b.models);
}

}  // namespace
}  // namespace posedet
