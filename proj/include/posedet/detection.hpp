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

#include <algorithm>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "posedet/appearance.hpp"
#include "posedet/error.hpp"
#include "posedet/geometry.hpp"
#include "posedet/parallel.hpp"
#include "posedet/priors.hpp"

namespace posedet {

enum class Ablation { Full, NoGeometric, NoAppearance };

inline std::string_view ablation_name(Ablation a) {
  switch (a) {
    case Ablation::Full: return "full";
    case Ablation::NoGeometric: return "no-geometric";
    case Ablation::NoAppearance: return "no-appearance";
  }
  return "full";
}

inline Ablation parse_ablation(std::string_view name) {
  if (name == "full") return Ablation::Full;
  if (name == "no-geometric" || name == "no_geometric") return Ablation::NoGeometric;
  if (name == "no-appearance" || name == "no_appearance") return Ablation::NoAppearance;
  throw Error(ErrorKind::InvalidArgument, "unknown ablation '" + std::string(name) + "'");
}

inline bool uses_appearance(Ablation a) { return a != Ablation::NoAppearance; }
inline bool uses_geometry(Ablation a) { return a != Ablation::NoGeometric; }

/// The log factors that make up a score; a factor is empty when the
/// ablation disables it.
struct ScoreComponents {
  std::optional<double> log_appearance;
  std::optional<PriorTerms> prior;
};

struct ProposalScore {
  std::size_t proposal_id = 0;
  std::string class_name;
  // Unnormalized log posterior; only comparable within a class.
  double log_score = 0.0;
  ScoreComponents components;
};

/**
 * Scores one proposal for one class as the sum of the log appearance
 * posterior and the log geometric prior, or just one of the two under an
 * ablation. Models and pose may be null when the ablation does not use
 * them.
 */
inline ProposalScore score_proposal(std::size_t proposal_id, const BoundingBox& box,
                                    std::span<const float> features, const Pose* pose,
                                    const ClassPriorModel* prior, const AppearanceModel* app,
                                    Ablation ablation) {
  ProposalScore s;
  s.proposal_id = proposal_id;
  if (uses_appearance(ablation)) {
    if (app == nullptr) throw Error(ErrorKind::MissingModel, "appearance model required");
    s.class_name = app->class_name;
    s.components.log_appearance = log_appearance_posterior(*app, features);
    s.log_score += *s.components.log_appearance;
  }
  if (uses_geometry(ablation)) {
    if (prior == nullptr) throw Error(ErrorKind::MissingModel, "geometric prior required");
    if (pose == nullptr) throw Error(ErrorKind::MissingPose, "geometric prior needs a pose");
    s.class_name = prior->class_name;
    s.components.prior = prior_terms(*prior, geometric_features(box), *pose);
    s.log_score += s.components.prior->total();
  }
  return s;
}

struct Detection {
  std::string image_id;
  std::string class_name;
  std::size_t proposal_id = 0;
  BoundingBox box;
  double score = 0.0;
  ScoreComponents components;
};

// Score descending, then proposal id ascending.
inline bool ranks_before(const Detection& a, const Detection& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.proposal_id < b.proposal_id;
}

/// Greedy non-maximum suppression over one class of one image. Keeps the
/// best remaining detection and drops every other one overlapping it by
/// more than `iou_threshold`. Output is in rank order.
inline std::vector<Detection> nms(std::vector<Detection> dets, double iou_threshold) {
  std::sort(dets.begin(), dets.end(), ranks_before);
  std::vector<Detection> kept;
  std::vector<bool> removed(dets.size(), false);
  for (std::size_t i = 0; i < dets.size(); ++i) {
    if (removed[i]) continue;
    for (std::size_t j = i + 1; j < dets.size(); ++j) {
      if (!removed[j] && iou(dets[i].box, dets[j].box) > iou_threshold) removed[j] = true;
    }
    kept.push_back(std::move(dets[i]));
  }
  return kept;
}

struct ModelSet {
  std::vector<std::string> classes;
  std::map<std::string, ClassPriorModel> priors;
  std::map<std::string, AppearanceModel> appearance;

  const ClassPriorModel* prior(const std::string& cls) const {
    auto it = priors.find(cls);
    return it == priors.end() ? nullptr : &it->second;
  }
  const AppearanceModel* app(const std::string& cls) const {
    auto it = appearance.find(cls);
    return it == appearance.end() ? nullptr : &it->second;
  }
};

struct DetectOptions {
  Ablation ablation = Ablation::Full;
  double nms_iou = 0.5;
  double score_floor = -std::numeric_limits<double>::infinity();
};

struct ImageInput {
  std::string image_id;
  std::vector<BoundingBox> proposals;
  FeatureMatrix features;
  std::optional<Pose> pose;
};

/**
 * Runs the full test-time pipeline on one image: scores every proposal for
 * every class, drops scores below the floor, and applies per-class NMS.
 * Classes are independent, so one proposal may survive in several classes.
 */
inline std::map<std::string, std::vector<Detection>> detect_image(const ImageInput& img, const ModelSet& models,
                                                                  const DetectOptions& opt = {}) {
  if (uses_appearance(opt.ablation) && img.features.rows() != img.proposals.size()) {
    throw Error(ErrorKind::AlignmentError, "image '" + img.image_id + "': " +
                                               std::to_string(img.proposals.size()) + " proposals but " +
                                               std::to_string(img.features.rows()) + " feature rows");
  }
  const Pose* pose = img.pose ? &*img.pose : nullptr;
  std::map<std::string, std::vector<Detection>> out;
  for (const auto& cls : models.classes) {
    const ClassPriorModel* prior = models.prior(cls);
    const AppearanceModel* app = models.app(cls);
    if ((uses_geometry(opt.ablation) && prior == nullptr) || (uses_appearance(opt.ablation) && app == nullptr)) {
      throw Error(ErrorKind::MissingModel, "no model for class '" + cls + "'");
    }
    std::vector<Detection> dets;
    for (std::size_t i = 0; i < img.proposals.size(); ++i) {
      std::span<const float> f;
      if (uses_appearance(opt.ablation)) f = img.features.row(i);
      ProposalScore s = score_proposal(i, img.proposals[i], f, pose, prior, app, opt.ablation);
      if (s.log_score < opt.score_floor) continue;
      dets.push_back({img.image_id, cls, i, img.proposals[i], s.log_score, std::move(s.components)});
    }
    out[cls] = nms(std::move(dets), opt.nms_iou);
  }
  return out;
}

/// detect_image over many images on `workers` threads; the flattened
/// result is ordered by image, then class, then rank.
inline std::vector<Detection> detect_images(std::span<const ImageInput> images, const ModelSet& models,
                                            const DetectOptions& opt = {}, int workers = 1) {
  std::vector<std::map<std::string, std::vector<Detection>>> per_image(images.size());
  parallel_for(images.size(), workers, [&](std::size_t i) { per_image[i] = detect_image(images[i], models, opt); });
  std::vector<Detection> out;
  for (auto& m : per_image) {
    for (const auto& cls : models.classes) {
      auto& v = m[cls];
      std::move(v.begin(), v.end(), std::back_inserter(out));
    }
  }
  return out;
}

}  // namespace posedet
