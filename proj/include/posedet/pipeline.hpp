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

// Training, detection and evaluation stages over whole datasets. The CLI is
// a thin layer over these; they also run on in-memory scenes.

#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "posedet/appearance.hpp"
#include "posedet/config.hpp"
#include "posedet/detection.hpp"
#include "posedet/error.hpp"
#include "posedet/evaluation.hpp"
#include "posedet/io.hpp"
#include "posedet/parallel.hpp"
#include "posedet/priors.hpp"
#include "posedet/synth.hpp"

namespace posedet {

/// Everything known about one image. Fields that a stage does not need
/// may be left empty.
struct Scene {
  std::string id;
  std::string split;
  double width = 0.0;
  double height = 0.0;
  std::optional<Pose> pose;
  std::vector<LabeledBox> ground_truth;
  // Boxes of classes outside the detected set.
  std::vector<BoundingBox> excluded;
  std::vector<BoundingBox> proposals;
  FeatureMatrix features;
};

struct LoadOptions {
  bool pose = false;
  bool ground_truth = false;
  bool proposals = false;
  bool features = false;
};

inline Scene load_scene(const Manifest& m, const ManifestImage& img, const LoadOptions& what) {
  Scene s;
  s.id = img.id;
  s.split = img.split;
  s.width = img.width;
  s.height = img.height;
  const std::string where = "image '" + img.id + "'";
  if (what.pose) {
    if (!img.pose) throw Error(ErrorKind::MissingPose, where + ": no pose file");
    s.pose = pose_from_json(read_json(m.resolve(*img.pose)), where + " pose");
  }
  if (what.ground_truth) {
    if (!img.ground_truth && !img.labelmap) {
      throw Error(ErrorKind::InvalidArgument, where + ": needs ground_truth boxes or a labelmap");
    }
    s.excluded = img.excluded;
    if (img.ground_truth) s.ground_truth = *img.ground_truth;
    if (img.labelmap) {
      const LabelMap map = labelmap_from_json(read_json(m.resolve(*img.labelmap)), where + " labelmap");
      if (map.width != img.width || map.height != img.height) {
        throw Error(ErrorKind::InvalidArgument, where + ": labelmap size differs from image size");
      }
      if (!img.ground_truth) s.ground_truth = gt_from_labelmap(map, m.merge);
      for (const auto& e : excluded_from_labelmap(map, m.excluded_classes)) s.excluded.push_back(e.box);
    }
  }
  if (what.proposals || what.features) {
    if (!img.proposals) throw Error(ErrorKind::InvalidArgument, where + ": no proposals file");
    s.proposals = read_proposals(m.resolve(*img.proposals));
  }
  if (what.features) {
    if (!img.features) throw Error(ErrorKind::InvalidArgument, where + ": no features file");
    IndexedFeatures f = read_features(m.resolve(*img.features));
    if (f.matrix.rows() != s.proposals.size()) {
      throw Error(ErrorKind::AlignmentError, where + ": " + std::to_string(s.proposals.size()) + " proposals but " +
                                                 std::to_string(f.matrix.rows()) + " feature rows");
    }
    for (std::size_t i = 0; i < f.rows.size(); ++i) {
      if (f.rows[i].image_id != img.id || f.rows[i].box_id != i) {
        throw Error(ErrorKind::AlignmentError, where + ": feature row " + std::to_string(i) + " is not proposal " +
                                                   std::to_string(i) + " of this image");
      }
    }
    s.features = std::move(f.matrix);
  }
  return s;
}

/// Loads every image of `split` ("" for all), `workers` at a time.
inline std::vector<Scene> load_scenes(const Manifest& m, std::string_view split, const LoadOptions& what,
                                      int workers = 1) {
  std::vector<const ManifestImage*> imgs;
  for (const auto& img : m.images) {
    if (split.empty() || img.split == split) imgs.push_back(&img);
  }
  std::vector<Scene> out(imgs.size());
  parallel_for(imgs.size(), workers, [&](std::size_t i) { out[i] = load_scene(m, *imgs[i], what); });
  return out;
}

inline std::vector<Scene> scenes_from_synth(const SynthDataset& ds, std::string_view split) {
  std::vector<Scene> out;
  for (const auto& sc : ds.scenes) {
    if (!split.empty() && sc.split != split) continue;
    out.push_back({sc.id, sc.split, static_cast<double>(ds.options.width), static_cast<double>(ds.options.height),
                   sc.pose, sc.ground_truth, {}, sc.proposals, sc.features});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Stages

inline PriorFitResult fit_priors(std::span<const Scene> train, std::span<const std::string> classes,
                                 const PipelineConfig& cfg) {
  std::vector<PriorSample> samples;
  for (const auto& s : train) {
    if (!s.pose) throw Error(ErrorKind::MissingPose, "image '" + s.id + "': no pose");
    for (const auto& gt : s.ground_truth) samples.push_back({gt.box, *s.pose, gt.label});
  }
  return fit_class_priors(samples, classes, cfg.prior_options());
}

inline PatchLabelSet make_patches(std::span<const Scene> scenes, const PipelineConfig& cfg) {
  std::vector<PatchImage> imgs;
  for (const auto& s : scenes) imgs.push_back({s.id, s.width, s.height, s.proposals, s.ground_truth, s.excluded});
  return label_patches(imgs, cfg.patches);
}

/// Patch features from the synthetic generator's appearance model.
/// Proposal patches reuse their proposal's feature row; ground-truth
/// patches get a fresh draw from their class cluster.
inline IndexedFeatures synth_patch_features(const PatchLabelSet& patches, std::span<const Scene> scenes,
                                            const SynthDataset& params) {
  std::map<std::string, const Scene*> by_id;
  for (const auto& s : scenes) by_id[s.id] = &s;
  IndexedFeatures out;
  out.matrix = FeatureMatrix(params.options.feature_dim);
  for (const auto& p : patches.patches) {
    if (p.source == PatchSource::Proposal) {
      auto it = by_id.find(p.image_id);
      if (it == by_id.end() || !p.proposal_id || *p.proposal_id >= it->second->features.rows()) {
        throw Error(ErrorKind::AlignmentError, "patch " + std::to_string(p.id) + " has no proposal features");
      }
      out.matrix.append(it->second->features.row(*p.proposal_id));
    } else {
      const std::string label = p.source == PatchSource::GroundTruth ? p.label : std::string(kBackground);
      out.matrix.append(synth_patch_feature(params, label, mix_seed(params.seed, fnv1a(p.image_id), p.id)));
    }
    out.rows.push_back({p.image_id, p.id});
  }
  return out;
}

/// Per-class feature rows of a patch set, matched through the
/// (image id, patch id) index.
struct PatchData {
  std::map<std::string, FeatureMatrix> by_label;
  std::size_t dim = 0;
};

inline PatchData gather_patch_features(const PatchLabelSet& patches, const IndexedFeatures& feats) {
  std::map<std::pair<std::string, std::size_t>, std::size_t> row_of;
  for (std::size_t i = 0; i < feats.rows.size(); ++i) row_of[{feats.rows[i].image_id, feats.rows[i].box_id}] = i;
  PatchData out;
  out.dim = feats.matrix.dim();
  for (const auto& p : patches.patches) {
    auto it = row_of.find({p.image_id, p.id});
    if (it == row_of.end()) {
      throw Error(ErrorKind::AlignmentError,
                  "no feature row for patch " + std::to_string(p.id) + " of image '" + p.image_id + "'");
    }
    auto [slot, fresh] = out.by_label.try_emplace(p.label, FeatureMatrix(out.dim));
    slot->second.append(feats.matrix.row(it->second));
  }
  return out;
}

/// Builds ImageInputs for detection; features and poses are only carried
/// when the ablation uses them.
inline std::vector<ImageInput> detection_inputs(std::span<const Scene> scenes, Ablation ablation) {
  std::vector<ImageInput> out;
  out.reserve(scenes.size());
  for (const auto& s : scenes) {
    ImageInput in{s.id, s.proposals, {}, std::nullopt};
    if (uses_appearance(ablation)) in.features = s.features;
    if (uses_geometry(ablation)) {
      if (!s.pose) throw Error(ErrorKind::MissingPose, "image '" + s.id + "': no pose");
      in.pose = s.pose;
    }
    out.push_back(std::move(in));
  }
  return out;
}

inline std::vector<EvalImage> eval_images(std::span<const Scene> scenes) {
  std::vector<EvalImage> out;
  for (const auto& s : scenes) out.push_back({s.id, s.proposals, s.ground_truth});
  return out;
}

/**
 * One-vs-rest linear SVMs: patches of the class are positives, every other
 * patch (background and other classes) is a negative. For each class, every
 * c in the grid is trained and lambda is calibrated on the validation
 * scenes by the class AP of the detection pipeline, using the geometric
 * prior when one exists. The best (c, lambda) by AP wins; ties go to the
 * smaller c, then the smaller lambda. Classes without positives are skipped.
 */
inline AppearanceDocument train_appearance(const PatchLabelSet& patches, const IndexedFeatures& feats,
                                           std::span<const std::string> classes, std::span<const Scene> val,
                                           const std::map<std::string, ClassPriorModel>& priors,
                                           const PipelineConfig& cfg) {
  const PatchData data = gather_patch_features(patches, feats);
  AppearanceDocument doc;
  doc.dim = data.dim;
  doc.seed = cfg.seed;
  bool any_defined = false;

  std::vector<double> c_grid = cfg.svm_c_grid;
  std::sort(c_grid.begin(), c_grid.end());
  const auto eval = eval_images(val);

  for (const auto& cls : classes) {
    auto pos_it = data.by_label.find(cls);
    if (pos_it == data.by_label.end() || pos_it->second.empty()) {
      doc.warnings.push_back("class '" + cls + "' skipped: no positive patches");
      continue;
    }
    FeatureMatrix neg(data.dim);
    for (const auto& [label, m] : data.by_label) {
      if (label == cls) continue;
      for (std::size_t i = 0; i < m.rows(); ++i) neg.append(m.row(i));
    }
    if (neg.empty()) {
      doc.warnings.push_back("class '" + cls + "' skipped: no negative patches");
      continue;
    }
    const SvmProblem problem = SvmProblem::from(pos_it->second, neg);

    ModelSet models;
    models.classes = {cls};
    Ablation ablation = Ablation::Full;
    if (auto p = priors.find(cls); p != priors.end()) {
      models.priors.emplace(cls, p->second);
    } else {
      ablation = Ablation::NoGeometric;
      doc.warnings.push_back("class '" + cls + "': no geometric prior, calibrated on appearance alone");
    }
    const auto inputs = detection_inputs(val, ablation);
    DetectOptions dopt = cfg.detect;
    dopt.ablation = ablation;

    std::optional<double> best_ap;
    AppearanceModel best;
    for (std::size_t ci = 0; ci < c_grid.size(); ++ci) {
      AppearanceModel app;
      app.class_name = cls;
      app.c = c_grid[ci];
      app.epochs = cfg.svm_epochs;
      app.seed = mix_seed(cfg.seed, fnv1a(cls), ci);
      app.num_positives = pos_it->second.rows();
      app.num_negatives = neg.rows();
      app.svm = train_svm(problem, {app.c, app.epochs, app.seed});

      std::map<double, std::optional<double>> ap_at;
      auto validation_ap = [&](const std::string&, double lambda) {
        app.lambda = lambda;
        models.appearance.insert_or_assign(cls, app);
        const auto dets = detect_images(inputs, models, dopt, cfg.workers);
        const auto curves = evaluate_detections(dets, eval, models.classes);
        ap_at[lambda] = curves.at(cls).ap;
        return ap_at[lambda];
      };
      std::vector<std::string> one{cls};
      double lambda = 1.0;
      try {
        lambda = calibrate_lambda(one, cfg.lambda_grid, validation_ap).at(cls);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::EmptyValidation) throw;
      }
      app.lambda = lambda;
      const std::optional<double> ap = ap_at.contains(lambda) ? ap_at[lambda] : std::nullopt;
      if (ci == 0 || (ap && (!best_ap || *ap > *best_ap))) {
        best = app;
        best_ap = ap;
      }
    }
    if (!best_ap) {
      doc.warnings.push_back("class '" + cls + "': no validation ground truth, kept c=" + format_double(best.c) +
                             " and lambda=1");
    }
    any_defined = any_defined || best_ap.has_value();
    doc.validation_ap[cls] = best_ap;
    doc.models.emplace(cls, std::move(best));
  }
  if (!doc.models.empty() && !any_defined) {
    throw Error(ErrorKind::EmptyValidation, "validation split has no ground truth for any trained class");
  }
  return doc;
}

inline ModelSet make_model_set(std::span<const std::string> classes, const std::map<std::string, ClassPriorModel>* priors,
                               const AppearanceDocument* app) {
  ModelSet m;
  m.classes.assign(classes.begin(), classes.end());
  if (priors != nullptr) m.priors = *priors;
  if (app != nullptr) m.appearance = app->models;
  return m;
}

/// Restricts `classes` to those with every model the ablation needs.
inline std::vector<std::string> detectable_classes(const ModelSet& models, Ablation ablation,
                                                   std::vector<std::string>* warnings = nullptr) {
  std::vector<std::string> out;
  for (const auto& cls : models.classes) {
    const bool ok = (!uses_geometry(ablation) || models.prior(cls) != nullptr) &&
                    (!uses_appearance(ablation) || models.app(cls) != nullptr);
    if (ok) {
      out.push_back(cls);
    } else if (warnings != nullptr) {
      warnings->push_back("class '" + cls + "' has no model for ablation " + std::string(ablation_name(ablation)));
    }
  }
  return out;
}

inline std::vector<Detection> run_detection(std::span<const Scene> scenes, ModelSet models, const DetectOptions& opt,
                                            int workers) {
  models.classes = detectable_classes(models, opt.ablation);
  if (models.classes.empty()) throw Error(ErrorKind::MissingModel, "no class has the models this ablation needs");
  const auto inputs = detection_inputs(scenes, opt.ablation);
  return detect_images(inputs, models, opt, workers);
}

}  // namespace posedet
