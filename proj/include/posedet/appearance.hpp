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

// Appearance side of the detector: training-patch labelling, linear SVMs on
// externally extracted features, and the sigmoid that turns SVM margins
// into class posteriors.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "posedet/error.hpp"
#include "posedet/geometry.hpp"
#include "posedet/random.hpp"

namespace posedet {

/// Dense row-major float matrix, one feature vector per row.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;

  explicit FeatureMatrix(std::size_t dim) : dim_(dim) {}

  FeatureMatrix(std::size_t rows, std::size_t dim, std::vector<float> data)
      : rows_(rows), dim_(dim), data_(std::move(data)) {
    if (data_.size() != rows_ * dim_) {
      throw Error(ErrorKind::DimensionMismatch, "feature buffer size does not match rows x dim");
    }
    for (float v : data_) {
      if (!std::isfinite(v)) throw Error(ErrorKind::NonFiniteInput, "non-finite feature value");
    }
  }

  std::size_t rows() const { return rows_; }
  std::size_t dim() const { return dim_; }
  bool empty() const { return rows_ == 0; }
  const std::vector<float>& data() const { return data_; }

  std::span<const float> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }

  void append(std::span<const float> values) {
    if (rows_ == 0 && dim_ == 0) dim_ = values.size();
    if (values.size() != dim_) {
      throw Error(ErrorKind::DimensionMismatch, "feature dimension " + std::to_string(values.size()) +
                                                    " != " + std::to_string(dim_));
    }
    for (float v : values) {
      if (!std::isfinite(v)) throw Error(ErrorKind::NonFiniteInput, "non-finite feature value");
    }
    data_.insert(data_.end(), values.begin(), values.end());
    ++rows_;
  }

  friend bool operator==(const FeatureMatrix&, const FeatureMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t dim_ = 0;
  std::vector<float> data_;
};

// ---------------------------------------------------------------------------
// Training patches

/// Scales `b` about its center by `factor`, then clips to [0,width]x[0,height].
inline BoundingBox enlarge_box(const BoundingBox& b, double factor, double width, double height) {
  if (!(factor >= 1.0)) throw Error(ErrorKind::InvalidArgument, "enlargement factor must be >= 1");
  const Point2 c = b.center();
  const double hw = b.width() * factor / 2.0;
  const double hh = b.height() * factor / 2.0;
  return {std::max(0.0, c.x - hw), std::max(0.0, c.y - hh), std::min(width, c.x + hw),
          std::min(height, c.y + hh)};
}

struct PatchRules {
  double positive_iou = 0.5;    // strictly above: positive
  double background_iou = 0.1;  // strictly below against every GT: background
  double enlargement = 1.8;
};

struct PatchImage {
  std::string image_id;
  double width = 0.0;
  double height = 0.0;
  std::vector<BoundingBox> proposals;
  std::vector<LabeledBox> ground_truth;
  // Ground truth of classes outside the detected set; used as background.
  std::vector<BoundingBox> excluded;
};

enum class PatchSource { GroundTruth, Proposal, ExcludedGroundTruth };

struct Patch {
  std::size_t id = 0;
  std::string image_id;
  std::string label;
  PatchSource source = PatchSource::Proposal;
  std::optional<std::size_t> proposal_id;
  BoundingBox box;
  BoundingBox crop;
  double best_iou = 0.0;

  friend bool operator==(const Patch&, const Patch&) = default;
};

struct PatchLabelSet {
  std::vector<Patch> patches;
  std::size_t discarded = 0;
  double enlargement = 1.8;

  std::vector<const Patch*> with_label(std::string_view label) const {
    std::vector<const Patch*> out;
    for (const auto& p : patches) {
      if (p.label == label) out.push_back(&p);
    }
    return out;
  }

  // Patch counts per label, background included.
  std::map<std::string, std::size_t> counts() const {
    std::map<std::string, std::size_t> out;
    for (const auto& p : patches) ++out[p.label];
    return out;
  }
};

/**
 * Assigns training labels to ground-truth boxes and proposals.
 *
 * Every ground-truth box is a positive of its class. A proposal whose IoU
 * with some ground truth exceeds `positive_iou` is a positive of the class
 * it overlaps most; one whose IoU with every ground-truth box is below
 * `background_iou` is background; anything in between is discarded.
 * Ground truth of excluded classes is added as background.
 */
inline PatchLabelSet label_patches(std::span<const PatchImage> images, const PatchRules& rules = {}) {
  PatchLabelSet out;
  out.enlargement = rules.enlargement;
  auto emit = [&](const PatchImage& img, std::string label, PatchSource src, std::optional<std::size_t> pid,
                  const BoundingBox& box, double best) {
    out.patches.push_back({out.patches.size(), img.image_id, std::move(label), src, pid, box,
                           enlarge_box(box, rules.enlargement, img.width, img.height), best});
  };
  for (const auto& img : images) {
    for (const auto& gt : img.ground_truth) emit(img, gt.label, PatchSource::GroundTruth, std::nullopt, gt.box, 1.0);
    for (std::size_t i = 0; i < img.proposals.size(); ++i) {
      const auto& p = img.proposals[i];
      double best = 0.0;
      const LabeledBox* best_gt = nullptr;
      for (const auto& gt : img.ground_truth) {
        const double v = iou(p, gt.box);
        if (v > best) {
          best = v;
          best_gt = &gt;
        }
      }
      if (best_gt != nullptr && best > rules.positive_iou) {
        emit(img, best_gt->label, PatchSource::Proposal, i, p, best);
      } else if (best < rules.background_iou) {
        emit(img, std::string(kBackground), PatchSource::Proposal, i, p, best);
      } else {
        ++out.discarded;
      }
    }
    for (const auto& ex : img.excluded) {
      emit(img, std::string(kBackground), PatchSource::ExcludedGroundTruth, std::nullopt, ex, 0.0);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Linear SVM

struct LinearSvm {
  std::vector<double> w;
  double bias = 0.0;

  double margin(std::span<const float> f) const {
    if (f.size() != w.size()) {
      throw Error(ErrorKind::DimensionMismatch, "feature dimension " + std::to_string(f.size()) +
                                                    " != model dimension " + std::to_string(w.size()));
    }
    double s = bias;
    for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * static_cast<double>(f[i]);
    return s;
  }
};

struct SvmOptions {
  double c = 1.0;
  int epochs = 50;
  std::uint64_t seed = 0;
};

/// Training set for one binary problem; labels are +1 / -1.
struct SvmProblem {
  std::vector<std::span<const float>> x;
  std::vector<int> y;

  std::size_t size() const { return x.size(); }
  std::size_t dim() const { return x.empty() ? 0 : x.front().size(); }

  static SvmProblem from(const FeatureMatrix& positives, const FeatureMatrix& negatives) {
    if (positives.empty() || negatives.empty()) {
      throw Error(ErrorKind::EmptyClass, "SVM needs at least one positive and one negative sample");
    }
    if (positives.dim() != negatives.dim()) {
      throw Error(ErrorKind::DimensionMismatch, "positive and negative feature dimensions differ");
    }
    SvmProblem p;
    for (std::size_t i = 0; i < positives.rows(); ++i) {
      p.x.push_back(positives.row(i));
      p.y.push_back(1);
    }
    for (std::size_t i = 0; i < negatives.rows(); ++i) {
      p.x.push_back(negatives.row(i));
      p.y.push_back(-1);
    }
    return p;
  }
};

inline double dot(std::span<const double> w, std::span<const float> x) {
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * static_cast<double>(x[i]);
  return s;
}

// L2-regularized hinge objective with an unregularized bias:
//   lambda/2 |w|^2 + 1/n sum max(0, 1 - y (w.x + b)),  lambda = 1/(c n).
inline double svm_objective(const LinearSvm& m, const SvmProblem& p, double c) {
  const double n = static_cast<double>(p.size());
  const double lambda = 1.0 / (c * n);
  double reg = 0.0;
  for (double v : m.w) reg += v * v;
  double loss = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    loss += std::max(0.0, 1.0 - p.y[i] * (dot(m.w, p.x[i]) + m.bias));
  }
  return 0.5 * lambda * reg + loss / n;
}

/// A subgradient of svm_objective (hinge kink counted as inactive).
inline LinearSvm svm_subgradient(const LinearSvm& m, const SvmProblem& p, double c) {
  const double n = static_cast<double>(p.size());
  const double lambda = 1.0 / (c * n);
  LinearSvm g{std::vector<double>(m.w.size()), 0.0};
  for (std::size_t k = 0; k < m.w.size(); ++k) g.w[k] = lambda * m.w[k];
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p.y[i] * (dot(m.w, p.x[i]) + m.bias) < 1.0) {
      for (std::size_t k = 0; k < m.w.size(); ++k) g.w[k] -= p.y[i] * static_cast<double>(p.x[i][k]) / n;
      g.bias -= p.y[i] / n;
    }
  }
  return g;
}

namespace detail {

// Runs `epochs` passes of stochastic subgradient descent with step
// eta0 / (1 + max(lambda eta0, 1/n) t) and returns the uniform average of
// the iterates from the second half of the epochs.
inline LinearSvm sgd_pass(const SvmProblem& p, double c, int epochs, std::uint64_t seed, double eta0,
                          std::size_t limit) {
  const std::size_t dim = p.dim();
  const std::size_t n = p.size();
  const double lambda = 1.0 / (c * static_cast<double>(n));
  const double decay = std::max(lambda * eta0, 1.0 / static_cast<double>(n));
  Rng rng(seed);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  const std::size_t steps = std::min(limit, n);
  const int average_from = epochs / 2;

  std::vector<double> w(dim, 0.0), avg_w(dim, 0.0);
  double b = 0.0, avg_b = 0.0;
  double t = 0.0;
  double averaged = 0.0;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t s = 0; s < steps; ++s) {
      const std::size_t i = order[s];
      const double eta = eta0 / (1.0 + decay * t);
      t += 1.0;
      const auto& x = p.x[i];
      const double y = p.y[i];
      const double margin = y * (dot(w, x) + b);
      const double shrink = 1.0 - eta * lambda;
      for (auto& v : w) v *= shrink;
      if (margin < 1.0) {
        for (std::size_t k = 0; k < dim; ++k) w[k] += eta * y * static_cast<double>(x[k]);
        b += eta * y;
      }
      if (epoch >= average_from) {
        averaged += 1.0;
        const double inv = 1.0 / averaged;
        for (std::size_t k = 0; k < dim; ++k) avg_w[k] += (w[k] - avg_w[k]) * inv;
        avg_b += (b - avg_b) * inv;
      }
    }
  }
  return {std::move(avg_w), avg_b};
}

}  // namespace detail

/**
 * Averaged stochastic subgradient descent on svm_objective.
 *
 * Samples are visited in a seeded random order each epoch. The initial
 * rate eta0 is the power of two in [2^-16, 1] giving the lowest objective
 * after a single pass over (at most 1000 of) the samples; the returned
 * model averages the iterates of the second half of the epochs.
 * Deterministic for a given seed.
 */
inline LinearSvm train_svm(const SvmProblem& p, const SvmOptions& opt = {}) {
  if (p.size() == 0) throw Error(ErrorKind::EmptyClass, "empty SVM problem");
  if (!(opt.c > 0.0) || opt.epochs < 1) throw Error(ErrorKind::InvalidArgument, "SVM needs c > 0 and epochs >= 1");
  const std::size_t dim = p.dim();
  for (const auto& x : p.x) {
    if (x.size() != dim) throw Error(ErrorKind::DimensionMismatch, "inconsistent feature dimension");
  }
  double best_eta = 1.0;
  double best_obj = std::numeric_limits<double>::infinity();
  for (int e = 0; e <= 16; ++e) {
    const double eta0 = std::ldexp(1.0, -e);
    const LinearSvm trial = detail::sgd_pass(p, opt.c, 1, opt.seed, eta0, 1000);
    const double obj = svm_objective(trial, p, opt.c);
    if (obj < best_obj) {
      best_obj = obj;
      best_eta = eta0;
    }
  }
  return detail::sgd_pass(p, opt.c, opt.epochs, opt.seed, best_eta, p.size());
}

inline LinearSvm train_svm(const FeatureMatrix& positives, const FeatureMatrix& negatives,
                           const SvmOptions& opt = {}) {
  return train_svm(SvmProblem::from(positives, negatives), opt);
}

// ---------------------------------------------------------------------------
// Calibrated posterior

struct AppearanceModel {
  std::string class_name;
  LinearSvm svm;
  double lambda = 1.0;
  double c = 1.0;
  std::size_t num_positives = 0;
  std::size_t num_negatives = 0;
  std::uint64_t seed = 0;
  int epochs = 0;

  double margin(std::span<const float> f) const { return svm.margin(f); }
};

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// log(sigmoid(x)) without overflow or underflow to -inf for moderate x.
inline double log_sigmoid(double x) {
  if (x >= 0.0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

inline double appearance_posterior(const AppearanceModel& model, std::span<const float> f) {
  return sigmoid(model.lambda * model.margin(f));
}

inline double log_appearance_posterior(const AppearanceModel& model, std::span<const float> f) {
  return log_sigmoid(model.lambda * model.margin(f));
}

/// 2^-6 ... 2^6.
inline std::vector<double> default_lambda_grid() {
  std::vector<double> grid;
  for (int e = -6; e <= 6; ++e) grid.push_back(std::ldexp(1.0, e));
  return grid;
}

/**
 * Per-class grid search for the sigmoid slope. `validation_ap(cls, lambda)`
 * runs the full detection pipeline on validation data and returns the
 * class AP (nullopt when the class has no validation ground truth). The
 * highest AP wins; ties go to the smallest lambda. Classes with no
 * validation ground truth keep lambda = 1.
 */
template <typename ApFn>
std::map<std::string, double> calibrate_lambda(std::span<const std::string> classes,
                                               std::span<const double> grid, ApFn&& validation_ap) {
  if (grid.empty()) throw Error(ErrorKind::InvalidArgument, "empty lambda grid");
  std::vector<double> sorted(grid.begin(), grid.end());
  std::sort(sorted.begin(), sorted.end());
  if (sorted.front() <= 0.0) throw Error(ErrorKind::InvalidArgument, "lambda must be positive");

  std::map<std::string, double> out;
  bool any_defined = false;
  for (const auto& cls : classes) {
    std::optional<double> best_ap;
    double best_lambda = 1.0;
    for (double lambda : sorted) {
      const std::optional<double> ap = validation_ap(cls, lambda);
      if (ap && (!best_ap || *ap > *best_ap)) {
        best_ap = ap;
        best_lambda = lambda;
      }
    }
    any_defined = any_defined || best_ap.has_value();
    out[cls] = best_lambda;
  }
  if (!classes.empty() && !any_defined) {
    throw Error(ErrorKind::EmptyValidation, "no class has validation ground truth");
  }
  return out;
}

}  // namespace posedet
