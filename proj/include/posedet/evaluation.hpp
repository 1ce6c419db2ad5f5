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

// Ground truth from pixel label maps, proposal precision/recall, and
// precision-recall curves with all-points average precision.

#include <algorithm>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "posedet/detection.hpp"
#include "posedet/error.hpp"
#include "posedet/geometry.hpp"

namespace posedet {

/// Row-major grid of label ids; 0 is unlabeled, every other id must be in
/// the legend.
struct LabelMap {
  int width = 0;
  int height = 0;
  std::vector<int> labels;
  std::map<int, std::string> legend;

  int at(int row, int col) const { return labels[static_cast<std::size_t>(row) * width + col]; }

  void validate() const {
    if (width < 0 || height < 0 ||
        labels.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
      throw Error(ErrorKind::FormatError, "label map size does not match width x height");
    }
    for (int v : labels) {
      if (v < 0) throw Error(ErrorKind::UnknownLabel, "negative label id");
      if (v != 0 && !legend.contains(v)) {
        throw Error(ErrorKind::UnknownLabel, "label id " + std::to_string(v) + " missing from legend");
      }
    }
  }

  friend bool operator==(const LabelMap&, const LabelMap&) = default;
};

namespace detail {

// Tight box around all pixels whose legend name maps to a key of `rename`,
// one box per renamed class. Pixel (r, c) covers [c, c+1] x [r, r+1].
inline std::vector<LabeledBox> tight_boxes(const LabelMap& map, const std::map<std::string, std::string>& rename) {
  map.validate();
  struct Extent {
    int c0 = std::numeric_limits<int>::max(), r0 = std::numeric_limits<int>::max();
    int c1 = -1, r1 = -1;
  };
  std::map<int, const std::string*> target;
  for (const auto& [id, name] : map.legend) {
    auto it = rename.find(name);
    if (it != rename.end()) target[id] = &it->second;
  }
  std::map<std::string, Extent> extents;
  for (int r = 0; r < map.height; ++r) {
    for (int c = 0; c < map.width; ++c) {
      const int v = map.at(r, c);
      if (v == 0) continue;
      auto it = target.find(v);
      if (it == target.end()) continue;
      Extent& e = extents[*it->second];
      e.c0 = std::min(e.c0, c);
      e.r0 = std::min(e.r0, r);
      e.c1 = std::max(e.c1, c);
      e.r1 = std::max(e.r1, r);
    }
  }
  std::vector<LabeledBox> out;
  for (const auto& [name, e] : extents) {
    out.push_back({name, BoundingBox(e.c0, e.r0, e.c1 + 1.0, e.r1 + 1.0)});
  }
  return out;
}

}  // namespace detail

/// One ground-truth box per merged class present in the map, tightly
/// enclosing every pixel of that class. `merge` maps original class names
/// to detected classes; names absent from it are ignored.
inline std::vector<LabeledBox> gt_from_labelmap(const LabelMap& map, const std::map<std::string, std::string>& merge) {
  return detail::tight_boxes(map, merge);
}

/// One box per original class listed in `excluded`, for use as
/// background training patches.
inline std::vector<LabeledBox> excluded_from_labelmap(const LabelMap& map, std::span<const std::string> excluded) {
  std::map<std::string, std::string> identity;
  for (const auto& name : excluded) identity[name] = name;
  return detail::tight_boxes(map, identity);
}

// ---------------------------------------------------------------------------
// Proposal statistics

struct EvalImage {
  std::string image_id;
  std::vector<BoundingBox> proposals;
  std::vector<LabeledBox> ground_truth;
};

struct ProposalStats {
  // Class-agnostic fraction of proposals with IoU >= threshold against
  // some ground truth; 0 with precision_defined = false when there are
  // no proposals.
  double precision = 0.0;
  bool precision_defined = false;
  std::size_t total_proposals = 0;
  std::size_t correct_proposals = 0;
  std::size_t images = 0;
  double mean_proposals_per_image = 0.0;
  // Per class: fraction of ground-truth boxes covered by at least one
  // proposal at IoU >= threshold.
  std::map<std::string, double> recall;
  std::map<std::string, std::size_t> gt_count;
  // Unweighted mean of the per-class recalls.
  double mean_recall = 0.0;
};

inline ProposalStats proposal_stats(std::span<const EvalImage> images, double iou_threshold = 0.5) {
  ProposalStats st;
  st.images = images.size();
  std::map<std::string, std::size_t> covered;
  for (const auto& img : images) {
    st.total_proposals += img.proposals.size();
    for (const auto& p : img.proposals) {
      for (const auto& gt : img.ground_truth) {
        if (iou(p, gt.box) >= iou_threshold) {
          ++st.correct_proposals;
          break;
        }
      }
    }
    for (const auto& gt : img.ground_truth) {
      ++st.gt_count[gt.label];
      covered[gt.label];
      for (const auto& p : img.proposals) {
        if (iou(p, gt.box) >= iou_threshold) {
          ++covered[gt.label];
          break;
        }
      }
    }
  }
  if (st.total_proposals > 0) {
    st.precision_defined = true;
    st.precision = static_cast<double>(st.correct_proposals) / static_cast<double>(st.total_proposals);
  }
  if (st.images > 0) {
    st.mean_proposals_per_image = static_cast<double>(st.total_proposals) / static_cast<double>(st.images);
  }
  double sum = 0.0;
  for (const auto& [cls, n] : st.gt_count) {
    st.recall[cls] = static_cast<double>(covered[cls]) / static_cast<double>(n);
    sum += st.recall[cls];
  }
  if (!st.gt_count.empty()) st.mean_recall = sum / static_cast<double>(st.gt_count.size());
  return st;
}

// ---------------------------------------------------------------------------
// Precision-recall and AP

struct PrPoint {
  double recall = 0.0;
  double precision = 0.0;
  double threshold = 0.0;
};

struct PrCurve {
  std::vector<PrPoint> points;
  // Empty when the class has no ground truth.
  std::optional<double> ap;
  std::size_t num_gt = 0;
  // Match outcome per ranked detection.
  std::vector<bool> true_positive;
};

// Ground-truth boxes of one class, keyed by image id.
using GroundTruthIndex = std::map<std::string, std::vector<BoundingBox>>;

/**
 * Ranks detections by score (ties: image id, then proposal id), matches
 * each to the highest-IoU still unmatched ground truth of its image with
 * IoU >= `iou_threshold`, and accumulates precision and recall down the
 * list. AP = sum over ranks of (r_i - r_{i-1}) * p_i, without
 * interpolation.
 */
inline PrCurve pr_curve(std::span<const Detection> detections, const GroundTruthIndex& gt,
                        double iou_threshold = 0.5) {
  PrCurve curve;
  for (const auto& [img, boxes] : gt) curve.num_gt += boxes.size();

  std::vector<const Detection*> ranked;
  for (const auto& d : detections) ranked.push_back(&d);
  std::sort(ranked.begin(), ranked.end(), [](const Detection* a, const Detection* b) {
    if (a->score != b->score) return a->score > b->score;
    if (a->image_id != b->image_id) return a->image_id < b->image_id;
    return a->proposal_id < b->proposal_id;
  });

  std::map<std::string, std::vector<bool>> used;
  for (const auto& [img, boxes] : gt) used[img].assign(boxes.size(), false);

  std::size_t tp = 0;
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t k = 0; k < ranked.size(); ++k) {
    const Detection& d = *ranked[k];
    bool hit = false;
    auto it = gt.find(d.image_id);
    if (it != gt.end()) {
      auto& taken = used[d.image_id];
      double best = -1.0;
      std::size_t best_j = 0;
      for (std::size_t j = 0; j < it->second.size(); ++j) {
        if (taken[j]) continue;
        const double v = iou(d.box, it->second[j]);
        if (v >= iou_threshold && v > best) {
          best = v;
          best_j = j;
        }
      }
      if (best >= 0.0) {
        taken[best_j] = true;
        hit = true;
      }
    }
    if (hit) ++tp;
    curve.true_positive.push_back(hit);
    if (curve.num_gt == 0) continue;
    const double recall = static_cast<double>(tp) / static_cast<double>(curve.num_gt);
    const double precision = static_cast<double>(tp) / static_cast<double>(k + 1);
    curve.points.push_back({recall, precision, d.score});
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  if (curve.num_gt > 0) curve.ap = ap;
  return curve;
}

struct MeanAp {
  double value = 0.0;
  std::vector<std::string> undefined;
};

/// Unweighted mean of the defined per-class APs.
inline MeanAp mean_ap(const std::map<std::string, PrCurve>& curves) {
  MeanAp out;
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& [cls, c] : curves) {
    if (c.ap) {
      sum += *c.ap;
      ++n;
    } else {
      out.undefined.push_back(cls);
    }
  }
  if (n == 0) throw Error(ErrorKind::AllUndefined, "no class has a defined AP");
  out.value = sum / static_cast<double>(n);
  return out;
}

/// Splits detections and ground truth by class and builds one curve per
/// class in `classes`.
inline std::map<std::string, PrCurve> evaluate_detections(std::span<const Detection> detections,
                                                          std::span<const EvalImage> images,
                                                          std::span<const std::string> classes,
                                                          double iou_threshold = 0.5) {
  std::map<std::string, PrCurve> out;
  for (const auto& cls : classes) {
    GroundTruthIndex gt;
    for (const auto& img : images) {
      auto& boxes = gt[img.image_id];
      for (const auto& g : img.ground_truth) {
        if (g.label == cls) boxes.push_back(g.box);
      }
    }
    std::vector<Detection> mine;
    for (const auto& d : detections) {
      if (d.class_name == cls) mine.push_back(d);
    }
    out[cls] = pr_curve(mine, gt, iou_threshold);
  }
  return out;
}

}  // namespace posedet
