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
#pragma once

// Synthetic scenes for testing: a stick-figure person per image, clothing
// items placed relative to body joints, proposals of several kinds and
// features drawn from per-class Gaussian clusters.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "posedet/appearance.hpp"
#include "posedet/config.hpp"
#include "posedet/geometry.hpp"
#include "posedet/io.hpp"
#include "posedet/priors.hpp"
#include "posedet/random.hpp"

namespace posedet {

/// Generating model of one item class. Offsets are box center minus
/// anchor joint; spreads are scaled by SynthOptions::shape_noise.
struct SynthClass {
  std::string name;
  int anchor = 0;
  std::vector<GmmComponent> modes;
  Gaussian1D aspect;
  Gaussian1D perimeter;
  std::vector<float> feature_center;
};

enum class ProposalKind { Jitter, NearMiss, Confuser, Decoy, Random };

inline std::string_view proposal_kind_name(ProposalKind k) {
  switch (k) {
    case ProposalKind::Jitter: return "jitter";
    case ProposalKind::NearMiss: return "near_miss";
    case ProposalKind::Confuser: return "confuser";
    case ProposalKind::Decoy: return "decoy";
    case ProposalKind::Random: return "random";
  }
  return "random";
}

struct SynthScene {
  std::string id;
  std::string split;
  Pose pose;
  std::vector<LabeledBox> ground_truth;
  std::vector<BoundingBox> proposals;
  std::vector<ProposalKind> kinds;
  FeatureMatrix features;
};

struct SynthDataset {
  SynthOptions options;
  std::uint64_t seed = 0;
  std::vector<SynthClass> classes;
  std::vector<SynthScene> scenes;

  std::vector<std::string> class_names() const {
    std::vector<std::string> out;
    for (const auto& c : classes) out.push_back(c.name);
    return out;
  }
};

namespace detail {

// Template person in a 640-pixel-tall frame, relative to the hip center.
inline constexpr std::array<Point2, kNumJoints> kStickFigure = {{
    {0, -300}, {0, -250},   {-45, -240}, {45, -240}, {-60, -160}, {60, -160}, {-65, -80},
    {65, -80}, {-25, 0},    {25, 0},     {-30, 120}, {30, 120},   {-35, 240}, {35, 240},
}};

// Per-joint positional jitter in pixels; limbs move more than the torso.
inline constexpr std::array<double, kNumJoints> kJointJitter = {4, 4, 4, 4, 8, 8, 12, 12, 4, 4, 8, 8, 8, 8};

inline Cov2 iso(double sd) { return {sd * sd, 0.0, sd * sd}; }

inline std::vector<float> one_hot(std::size_t dim, std::size_t k, double scale) {
  std::vector<float> v(dim, 0.0f);
  v[k] = static_cast<float>(scale);
  return v;
}

inline Point2 sample_mode(Rng& rng, const std::vector<GmmComponent>& modes, double noise) {
  double u = rng.uniform();
  const GmmComponent* pick = &modes.back();
  for (const auto& m : modes) {
    if (u < m.weight) {
      pick = &m;
      break;
    }
    u -= m.weight;
  }
  return {pick->mean.x + noise * std::sqrt(pick->cov.xx) * rng.normal(),
          pick->mean.y + noise * std::sqrt(pick->cov.yy) * rng.normal()};
}

// Shifts `b` inside the image, clipping only if it is larger than the image.
inline BoundingBox fit_inside(const BoundingBox& b, double width, double height) {
  double dx = 0.0, dy = 0.0;
  if (b.x1() < 0.0) dx = -b.x1();
  if (b.x2() + dx > width) dx = width - b.x2();
  if (b.y1() < 0.0) dy = -b.y1();
  if (b.y2() + dy > height) dy = height - b.y2();
  const BoundingBox t = b.translated(dx, dy);
  return {std::max(0.0, t.x1()), std::max(0.0, t.y1()), std::min(width, t.x2()), std::min(height, t.y2())};
}

inline BoundingBox jitter_box(Rng& rng, const BoundingBox& b, double frac, double width, double height) {
  for (int attempt = 0; attempt < 20; ++attempt) {
    const double x1 = b.x1() + rng.normal(0.0, frac * b.width());
    const double x2 = b.x2() + rng.normal(0.0, frac * b.width());
    const double y1 = b.y1() + rng.normal(0.0, frac * b.height());
    const double y2 = b.y2() + rng.normal(0.0, frac * b.height());
    if (x2 - x1 > 2.0 && y2 - y1 > 2.0) return fit_inside({x1, y1, x2, y2}, width, height);
  }
  return b;
}

}  // namespace detail

/// The first `options.num_classes` of six item classes.
inline std::vector<SynthClass> synth_classes(const SynthOptions& options) {
  using detail::iso;
  const double s = options.height / 640.0;
  auto shape = [&](double w, double h, double sd_a, double sd_r) {
    return std::pair{Gaussian1D{std::log(h / w), sd_a * sd_a}, Gaussian1D{std::log((h + w) * s), sd_r * sd_r}};
  };
  std::vector<SynthClass> all;
  auto add = [&](std::string name, std::string_view anchor, std::vector<GmmComponent> modes,
                 std::pair<Gaussian1D, Gaussian1D> geo) {
    for (auto& m : modes) m.mean = {m.mean.x * s, m.mean.y * s};
    all.push_back({std::move(name), *joint_index(anchor), std::move(modes), geo.first, geo.second, {}});
  };
  add("hat", "head", {{1.0, {0, -18}, iso(3)}}, shape(60, 36, 0.10, 0.06));
  add("shirt", "neck", {{1.0, {0, 90}, iso(5)}}, shape(110, 160, 0.08, 0.05));
  add("pants", "left_hip", {{1.0, {25, 110}, iso(5)}}, shape(90, 220, 0.08, 0.05));
  add("shoes", "left_foot", {{1.0, {35, 8}, iso(4)}}, shape(110, 30, 0.10, 0.06));
  add("bag", "right_wrist", {{0.5, {-22, 30}, iso(4)}, {0.5, {22, 30}, iso(4)}}, shape(50, 60, 0.10, 0.06));
  add("belt", "left_hip", {{1.0, {25, -5}, iso(3)}}, shape(80, 16, 0.10, 0.06));
  all.resize(std::min(all.size(), options.num_classes));
  for (std::size_t k = 0; k < all.size(); ++k) {
    all[k].feature_center = detail::one_hot(options.feature_dim, k, options.feature_separation);
  }
  return all;
}

/// Stick figure with randomized placement, scale and joint jitter. Each
/// joint is visible with probability 0.98.
inline Pose synth_pose(Rng& rng, const SynthOptions& options) {
  const double s = options.height / 640.0;
  const double scale = s * rng.uniform(0.92, 1.04);
  const Point2 root{options.width / 2.0 + rng.uniform(-20.0, 20.0) * s, (350.0 + rng.uniform(-15.0, 15.0)) * s};
  Pose pose;
  for (std::size_t j = 0; j < kNumJoints; ++j) {
    const double jit = detail::kJointJitter[j] * s;
    pose.joints[j] = {root.x + detail::kStickFigure[j].x * scale + rng.normal(0.0, jit),
                      root.y + detail::kStickFigure[j].y * scale + rng.normal(0.0, jit)};
    pose.visible[j] = rng.bernoulli(0.98);
  }
  return pose;
}

/// Draws an item box of class `c` for the given (full, unmasked) pose.
inline BoundingBox synth_item_box(Rng& rng, const SynthClass& c, const std::array<Point2, kNumJoints>& joints,
                                  const SynthOptions& options) {
  const double noise = options.shape_noise;
  const Point2 off = detail::sample_mode(rng, c.modes, noise);
  const Point2 anchor = joints[static_cast<std::size_t>(c.anchor)];
  GeometricFeatures g{anchor.x + off.x, anchor.y + off.y,
                      c.aspect.mean + noise * std::sqrt(c.aspect.variance) * rng.normal(),
                      c.perimeter.mean + noise * std::sqrt(c.perimeter.variance) * rng.normal()};
  return detail::fit_inside(box_from_features(g), options.width, options.height);
}

/**
 * One scene. Present items (probability `presence` each) get three
 * jittered proposals, one near miss and `confusers` look-alikes placed
 * away from the item's anchor. Each absent class gets a decoy at its
 * expected location with background appearance. Random boxes fill the rest.
 */
inline SynthScene synth_scene(const SynthOptions& options, std::span<const SynthClass> classes, std::uint64_t seed,
                              std::size_t index, std::string split) {
  Rng rng(mix_seed(seed, 0x5ce4e, index));
  SynthScene sc;
  char id[32];
  std::snprintf(id, sizeof id, "img_%05zu", index);
  sc.id = id;
  sc.split = std::move(split);
  sc.pose = synth_pose(rng, options);
  const double W = options.width, H = options.height;

  std::vector<std::pair<BoundingBox, std::vector<float>>> props;
  std::vector<ProposalKind> kinds;
  for (const auto& c : classes) {
    const bool present = rng.bernoulli(options.presence);
    const BoundingBox item = synth_item_box(rng, c, sc.pose.joints, options);
    if (!present) {
      props.push_back({item, {}});
      kinds.push_back(ProposalKind::Decoy);
      continue;
    }
    sc.ground_truth.push_back({c.name, item});
    for (int k = 0; k < 3; ++k) {
      props.push_back({detail::jitter_box(rng, item, 0.06, W, H), {}});
      kinds.push_back(ProposalKind::Jitter);
    }
    const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
    props.push_back({detail::fit_inside(item.translated(0.45 * item.width() * std::cos(angle),
                                                        0.45 * item.height() * std::sin(angle)),
                                        W, H),
                     {}});
    kinds.push_back(ProposalKind::NearMiss);
    const Point2 anchor = sc.pose.joints[static_cast<std::size_t>(c.anchor)];
    for (std::size_t k = 0; k < options.confusers; ++k) {
      GeometricFeatures g = geometric_features(item);
      for (int attempt = 0; attempt < 50; ++attempt) {
        g.lx = rng.uniform(0.0, W);
        g.ly = rng.uniform(0.0, H);
        if (std::hypot(g.lx - anchor.x, g.ly - anchor.y) > 0.25 * H) break;
      }
      props.push_back({detail::fit_inside(box_from_features(g), W, H), c.feature_center});
      kinds.push_back(ProposalKind::Confuser);
    }
  }
  for (std::size_t k = 0; k < options.random_proposals; ++k) {
    const double w = rng.uniform(0.05, 0.6) * W;
    const double h = rng.uniform(0.03, 0.5) * H;
    const double x = rng.uniform(0.0, W - w);
    const double y = rng.uniform(0.0, H - h);
    props.push_back({{x, y, x + w, y + h}, {}});
    kinds.push_back(ProposalKind::Random);
  }

  // Appearance: a blend toward the best-overlapping item's cluster, plus
  // isotropic noise. Confusers carry their class cluster, decoys none.
  const std::size_t dim = options.feature_dim;
  sc.features = FeatureMatrix(dim);
  std::vector<float> f(dim);
  for (std::size_t i = 0; i < props.size(); ++i) {
    std::fill(f.begin(), f.end(), 0.0f);
    if (kinds[i] == ProposalKind::Confuser) {
      f = props[i].second;
    } else if (kinds[i] != ProposalKind::Decoy) {
      double best = 0.0;
      const SynthClass* owner = nullptr;
      for (const auto& gt : sc.ground_truth) {
        const double v = iou(props[i].first, gt.box);
        if (v > best) {
          best = v;
          owner = &*std::find_if(classes.begin(), classes.end(), [&](const auto& c) { return c.name == gt.label; });
        }
      }
      const double beta = std::clamp((best - 0.2) / 0.5, 0.0, 1.0);
      if (owner != nullptr) {
        for (std::size_t d = 0; d < dim; ++d) f[d] = static_cast<float>(beta * owner->feature_center[d]);
      }
    }
    for (auto& v : f) v += static_cast<float>(rng.normal(0.0, options.feature_noise));
    sc.proposals.push_back(props[i].first);
    sc.features.append(f);
  }
  sc.kinds = std::move(kinds);
  return sc;
}

/// Training scenes come first (the last `val_fraction` of them tagged
/// "val"), then test scenes.
inline SynthDataset synth_dataset(const SynthOptions& options, std::uint64_t seed) {
  SynthDataset ds;
  ds.options = options;
  ds.seed = seed;
  ds.classes = synth_classes(options);
  const auto n_train = options.train_scenes;
  const auto n_val = static_cast<std::size_t>(std::llround(options.val_fraction * static_cast<double>(n_train)));
  for (std::size_t i = 0; i < n_train + options.test_scenes; ++i) {
    const char* split = i < n_train - n_val ? "train" : (i < n_train ? "val" : "test");
    ds.scenes.push_back(synth_scene(options, ds.classes, seed, i, split));
  }
  return ds;
}

/// Fresh appearance sample for a ground-truth patch of `label`.
inline std::vector<float> synth_patch_feature(const SynthDataset& ds, const std::string& label,
                                              std::uint64_t patch_seed) {
  Rng rng(patch_seed);
  std::vector<float> f(ds.options.feature_dim, 0.0f);
  for (const auto& c : ds.classes) {
    if (c.name == label) f = c.feature_center;
  }
  for (auto& v : f) v += static_cast<float>(rng.normal(0.0, ds.options.feature_noise));
  return f;
}

// ---------------------------------------------------------------------------
// Serialization

inline json synth_params_to_json(const SynthDataset& ds) {
  json j = header(schema::kSynth);
  j["seed"] = ds.seed;
  PipelineConfig cfg;
  cfg.synth = ds.options;
  j["options"] = config_to_json(cfg).at("synth");
  json classes = json::array();
  for (const auto& c : ds.classes) {
    classes.push_back({{"class", c.name},
                       {"anchor", std::string(joint_name(c.anchor))},
                       {"modes", gmm_to_json(Gmm2D{c.modes})},
                       {"aspect", {{"mean", c.aspect.mean}, {"variance", c.aspect.variance}}},
                       {"perimeter", {{"mean", c.perimeter.mean}, {"variance", c.perimeter.variance}}},
                       {"feature_center", c.feature_center}});
  }
  j["classes"] = std::move(classes);
  return j;
}

/// Rebuilds a dataset description (without scenes) from its parameter file.
inline SynthDataset synth_params_from_json(const json& j, const std::string& where = "synth") {
  check_header(j, schema::kSynth, where);
  json wrapped = {{"synth", j.at("options")}};
  SynthDataset ds;
  ds.options = config_from_json(wrapped).synth;
  ds.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& c : j.at("classes")) {
    SynthClass sc;
    sc.name = c.at("class").get<std::string>();
    sc.anchor = joint_from_name(c.at("anchor").get<std::string>());
    sc.modes = gmm_from_json(c.at("modes")).components;
    sc.aspect = {c.at("aspect").at("mean").get<double>(), c.at("aspect").at("variance").get<double>()};
    sc.perimeter = {c.at("perimeter").at("mean").get<double>(), c.at("perimeter").at("variance").get<double>()};
    sc.feature_center = c.at("feature_center").get<std::vector<float>>();
    ds.classes.push_back(std::move(sc));
  }
  return ds;
}

/// Writes the manifest and every per-image file under `dir`.
inline Manifest write_synth(const SynthDataset& ds, const fs::path& dir) {
  Manifest m;
  m.base_dir = dir;
  m.classes = ds.class_names();
  for (const auto& c : m.classes) m.merge[c] = c;
  for (const auto& sc : ds.scenes) {
    ManifestImage img;
    img.id = sc.id;
    img.width = ds.options.width;
    img.height = ds.options.height;
    img.split = sc.split;
    img.pose = fs::path("poses") / (sc.id + ".json");
    img.ground_truth = sc.ground_truth;
    img.proposals = fs::path("proposals") / (sc.id + ".jsonl");
    img.features = fs::path("features") / (sc.id + ".bin");
    write_json(dir / *img.pose, pose_to_json(sc.pose));
    write_atomic(dir / *img.proposals, proposals_to_jsonl(sc.id, sc.proposals));
    std::vector<FeatureRow> rows;
    for (std::size_t i = 0; i < sc.proposals.size(); ++i) rows.push_back({sc.id, i});
    write_features(dir / *img.features, sc.features, rows);
    m.images.push_back(std::move(img));
  }
  write_json(dir / "synth.json", synth_params_to_json(ds));
  write_json(dir / "manifest.json", manifest_to_json(m));
  return m;
}

}  // namespace posedet
