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

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "json.hpp"
#include "posedet/appearance.hpp"
#include "posedet/detection.hpp"
#include "posedet/error.hpp"
#include "posedet/priors.hpp"

namespace posedet {

/// Knobs of the synthetic scene generator.
struct SynthOptions {
  std::size_t train_scenes = 200;
  std::size_t test_scenes = 100;
  // Fraction of training scenes tagged as validation.
  double val_fraction = 0.2;
  std::size_t num_classes = 5;
  std::size_t feature_dim = 16;
  // Distance of class feature clusters from the background cluster, in
  // units of the per-dimension noise.
  double feature_separation = 2.0;
  double feature_noise = 1.0;
  double presence = 0.7;
  // Multiplies the spread of every class's aspect, perimeter and center
  // offset distributions; 0 makes every instance of a class identical.
  double shape_noise = 1.0;
  std::size_t random_proposals = 30;
  // Per present item: look-alike boxes placed away from the pose anchor.
  std::size_t confusers = 2;
  int width = 320;
  int height = 640;

  friend bool operator==(const SynthOptions&, const SynthOptions&) = default;
};

struct PipelineConfig {
  std::uint64_t seed = 0;
  int workers = 1;
  PriorOptions prior;
  PatchRules patches;
  int svm_epochs = 50;
  std::vector<double> svm_c_grid = {0.01, 0.1, 1.0, 10.0};
  std::vector<double> lambda_grid = default_lambda_grid();
  DetectOptions detect;
  SynthOptions synth;

  // Options with the top-level seed and worker count applied.
  PriorOptions prior_options() const {
    PriorOptions p = prior;
    p.seed = seed;
    p.workers = workers;
    return p;
  }
};

namespace detail {

template <typename T>
void read_opt(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

inline void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorKind::InvalidArgument, "config: " + what);
}

}  // namespace detail

inline void validate(const PipelineConfig& c) {
  using detail::require;
  require(c.workers >= 1, "workers must be >= 1");
  require(c.prior.m_max >= 1, "m_max must be >= 1");
  require(c.prior.restarts >= 1, "restarts must be >= 1");
  require(c.prior.variance_floor > 0 && c.prior.covariance_floor > 0, "floors must be positive");
  require(c.prior.mass_floor_fraction >= 0, "mass_floor_fraction must be >= 0");
  require(c.prior.em_tol > 0 && c.prior.max_iters >= 1, "em_tol and max_iters must be positive");
  require(c.prior.joints_per_class >= 1, "joints_per_class must be >= 1");
  require(c.patches.enlargement >= 1.0, "enlargement must be >= 1");
  require(c.svm_epochs >= 1, "svm_epochs must be >= 1");
  require(!c.svm_c_grid.empty() && !c.lambda_grid.empty(), "grids must be non-empty");
  for (double v : c.svm_c_grid) require(v > 0, "svm_c_grid entries must be positive");
  for (double v : c.lambda_grid) require(v > 0, "lambda_grid entries must be positive");
  require(c.detect.nms_iou >= 0 && c.detect.nms_iou <= 1, "nms_iou must be in [0,1]");
  require(c.synth.num_classes >= 1 && c.synth.num_classes <= 6, "synth.num_classes must be in [1,6]");
  require(c.synth.feature_dim >= c.synth.num_classes, "synth.feature_dim must be >= num_classes");
  require(c.synth.shape_noise >= 0, "synth.shape_noise must be >= 0");
  require(c.synth.presence >= 0 && c.synth.presence <= 1, "synth.presence must be in [0,1]");
  require(c.synth.width >= 64 && c.synth.height >= 128, "synth image must be at least 64x128");
  require(c.synth.val_fraction >= 0 && c.synth.val_fraction < 1, "synth.val_fraction must be in [0,1)");
}

inline PipelineConfig config_from_json(const nlohmann::json& j) {
  using detail::read_opt;
  PipelineConfig c;
  if (j.contains("version") && j.at("version") != 1) {
    throw Error(ErrorKind::VersionMismatch, "config version " + j.at("version").dump() + " is not supported");
  }
  read_opt(j, "seed", c.seed);
  read_opt(j, "workers", c.workers);
  read_opt(j, "m_max", c.prior.m_max);
  read_opt(j, "restarts", c.prior.restarts);
  read_opt(j, "variance_floor", c.prior.variance_floor);
  read_opt(j, "covariance_floor", c.prior.covariance_floor);
  read_opt(j, "mass_floor_fraction", c.prior.mass_floor_fraction);
  read_opt(j, "em_tol", c.prior.em_tol);
  read_opt(j, "max_iters", c.prior.max_iters);
  read_opt(j, "min_class_samples", c.prior.min_class_samples);
  read_opt(j, "joints_per_class", c.prior.joints_per_class);
  read_opt(j, "enlargement", c.patches.enlargement);
  read_opt(j, "positive_iou", c.patches.positive_iou);
  read_opt(j, "background_iou", c.patches.background_iou);
  read_opt(j, "svm_epochs", c.svm_epochs);
  read_opt(j, "svm_c_grid", c.svm_c_grid);
  read_opt(j, "lambda_grid", c.lambda_grid);
  read_opt(j, "nms_iou", c.detect.nms_iou);
  read_opt(j, "score_floor", c.detect.score_floor);
  if (j.contains("ablation")) c.detect.ablation = parse_ablation(j.at("ablation").get<std::string>());
  if (j.contains("synth")) {
    const auto& s = j.at("synth");
    read_opt(s, "train_scenes", c.synth.train_scenes);
    read_opt(s, "test_scenes", c.synth.test_scenes);
    read_opt(s, "val_fraction", c.synth.val_fraction);
    read_opt(s, "num_classes", c.synth.num_classes);
    read_opt(s, "feature_dim", c.synth.feature_dim);
    read_opt(s, "feature_separation", c.synth.feature_separation);
    read_opt(s, "feature_noise", c.synth.feature_noise);
    read_opt(s, "presence", c.synth.presence);
    read_opt(s, "shape_noise", c.synth.shape_noise);
    read_opt(s, "random_proposals", c.synth.random_proposals);
    read_opt(s, "confusers", c.synth.confusers);
    read_opt(s, "width", c.synth.width);
    read_opt(s, "height", c.synth.height);
  }
  validate(c);
  return c;
}

inline nlohmann::json config_to_json(const PipelineConfig& c) {
  nlohmann::json j;
  j["schema"] = "posedet.config";
  j["version"] = 1;
  j["seed"] = c.seed;
  j["workers"] = c.workers;
  j["m_max"] = c.prior.m_max;
  j["restarts"] = c.prior.restarts;
  j["variance_floor"] = c.prior.variance_floor;
  j["covariance_floor"] = c.prior.covariance_floor;
  j["mass_floor_fraction"] = c.prior.mass_floor_fraction;
  j["em_tol"] = c.prior.em_tol;
  j["max_iters"] = c.prior.max_iters;
  j["min_class_samples"] = c.prior.min_class_samples;
  j["joints_per_class"] = c.prior.joints_per_class;
  j["enlargement"] = c.patches.enlargement;
  j["positive_iou"] = c.patches.positive_iou;
  j["background_iou"] = c.patches.background_iou;
  j["svm_epochs"] = c.svm_epochs;
  j["svm_c_grid"] = c.svm_c_grid;
  j["lambda_grid"] = c.lambda_grid;
  j["nms_iou"] = c.detect.nms_iou;
  if (std::isfinite(c.detect.score_floor)) {
    j["score_floor"] = c.detect.score_floor;
  } else {
    j["score_floor"] = nullptr;
  }
  j["ablation"] = std::string(ablation_name(c.detect.ablation));
  j["synth"] = {{"train_scenes", c.synth.train_scenes},
                {"test_scenes", c.synth.test_scenes},
                {"val_fraction", c.synth.val_fraction},
                {"num_classes", c.synth.num_classes},
                {"feature_dim", c.synth.feature_dim},
                {"feature_separation", c.synth.feature_separation},
                {"feature_noise", c.synth.feature_noise},
                {"presence", c.synth.presence},
                {"shape_noise", c.synth.shape_noise},
                {"random_proposals", c.synth.random_proposals},
                {"confusers", c.synth.confusers},
                {"width", c.synth.width},
                {"height", c.synth.height}};
  return j;
}

}  // namespace posedet
