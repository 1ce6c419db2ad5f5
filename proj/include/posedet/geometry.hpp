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
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

#include "posedet/error.hpp"

namespace posedet {

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Point2 operator-(Point2 a, Point2 b) { return {a.x - b.x, a.y - b.y}; }
  friend bool operator==(const Point2&, const Point2&) = default;
};

/**
 * Axis-aligned box in continuous pixel coordinates, (x1,y1) top-left and
 * (x2,y2) bottom-right. Width and height are strictly positive; area is
 * (x2-x1)(y2-y1) with no +1 pixel convention.
 */
class BoundingBox {
 public:
  BoundingBox(double x1, double y1, double x2, double y2) : x1_(x1), y1_(y1), x2_(x2), y2_(y2) {
    if (!std::isfinite(x1) || !std::isfinite(y1) || !std::isfinite(x2) || !std::isfinite(y2)) {
      throw Error(ErrorKind::InvalidBox, "non-finite box coordinate");
    }
    if (!(x2 > x1) || !(y2 > y1)) {
      throw Error(ErrorKind::InvalidBox, "box must have positive width and height");
    }
  }

  double x1() const { return x1_; }
  double y1() const { return y1_; }
  double x2() const { return x2_; }
  double y2() const { return y2_; }
  double width() const { return x2_ - x1_; }
  double height() const { return y2_ - y1_; }
  double area() const { return width() * height(); }
  Point2 center() const { return {(x1_ + x2_) / 2.0, (y1_ + y2_) / 2.0}; }

  BoundingBox translated(double dx, double dy) const {
    return {x1_ + dx, y1_ + dy, x2_ + dx, y2_ + dy};
  }

  // Scales the coordinates (not about the center).
  BoundingBox scaled(double s) const { return {x1_ * s, y1_ * s, x2_ * s, y2_ * s}; }

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;

 private:
  double x1_, y1_, x2_, y2_;
};

inline double intersection_area(const BoundingBox& a, const BoundingBox& b) {
  const double w = std::min(a.x2(), b.x2()) - std::max(a.x1(), b.x1());
  const double h = std::min(a.y2(), b.y2()) - std::max(a.y1(), b.y1());
  if (w <= 0.0 || h <= 0.0) return 0.0;
  return w * h;
}

inline double iou(const BoundingBox& a, const BoundingBox& b) {
  const double inter = intersection_area(a, b);
  if (inter <= 0.0) return 0.0;
  const double uni = a.area() + b.area() - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

/// Center, log aspect ratio log(h/w) and log half-perimeter log(h+w).
struct GeometricFeatures {
  double lx = 0.0;
  double ly = 0.0;
  double a = 0.0;
  double r = 0.0;

  Point2 center() const { return {lx, ly}; }
};

inline GeometricFeatures geometric_features(const BoundingBox& b) {
  const Point2 c = b.center();
  return {c.x, c.y, std::log(b.height() / b.width()), std::log(b.height() + b.width())};
}

/// Inverse of geometric_features: builds the box with the given center,
/// log aspect ratio and log half-perimeter.
inline BoundingBox box_from_features(const GeometricFeatures& g) {
  const double half_perimeter = std::exp(g.r);
  const double ratio = std::exp(g.a);
  const double w = half_perimeter / (1.0 + ratio);
  const double h = half_perimeter - w;
  return {g.lx - w / 2.0, g.ly - h / 2.0, g.lx + w / 2.0, g.ly + h / 2.0};
}

// Box center relative to a joint.
inline Point2 offset(Point2 center, Point2 joint) { return center - joint; }

inline constexpr std::size_t kNumJoints = 14;

inline constexpr std::array<std::string_view, kNumJoints> kJointNames = {
    "head",       "neck",      "left_shoulder", "right_shoulder", "left_elbow",
    "right_elbow", "left_wrist", "right_wrist",  "left_hip",       "right_hip",
    "left_knee",  "right_knee", "left_foot",     "right_foot"};

inline std::optional<int> joint_index(std::string_view name) {
  for (std::size_t i = 0; i < kJointNames.size(); ++i) {
    if (kJointNames[i] == name) return static_cast<int>(i);
  }
  return std::nullopt;
}

inline std::string_view joint_name(int id) {
  if (id < 0 || id >= static_cast<int>(kNumJoints)) {
    throw Error(ErrorKind::UnknownJoint, "joint id " + std::to_string(id) + " out of range");
  }
  return kJointNames[static_cast<std::size_t>(id)];
}

/// Fourteen named body joints of one person. A joint that the pose
/// estimator did not report is marked invisible.
struct Pose {
  std::array<Point2, kNumJoints> joints{};
  std::array<bool, kNumJoints> visible{};

  Pose() { visible.fill(true); }

  explicit Pose(const std::array<Point2, kNumJoints>& pts) : joints(pts) {
    visible.fill(true);
    for (const auto& p : joints) {
      if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
        throw Error(ErrorKind::NonFiniteInput, "pose joint coordinate is not finite");
      }
    }
  }

  bool has(int joint) const {
    return joint >= 0 && joint < static_cast<int>(kNumJoints) && visible[static_cast<std::size_t>(joint)];
  }

  Point2 operator[](int joint) const { return joints[static_cast<std::size_t>(joint)]; }

  Pose translated(double dx, double dy) const {
    Pose out = *this;
    for (auto& p : out.joints) p = p + Point2{dx, dy};
    return out;
  }

  // Coordinates of invisible joints carry no information and are ignored.
  friend bool operator==(const Pose& a, const Pose& b) {
    for (std::size_t j = 0; j < kNumJoints; ++j) {
      if (a.visible[j] != b.visible[j] || (a.visible[j] && a.joints[j] != b.joints[j])) return false;
    }
    return true;
  }
};

/// Class z of the configured set Y. Background is not a ClassLabel.
struct ClassLabel {
  int id = 0;
  std::string name;

  friend bool operator==(const ClassLabel&, const ClassLabel&) = default;
};

inline constexpr std::string_view kBackground = "background";

struct LabeledBox {
  std::string label;
  BoundingBox box;

  friend bool operator==(const LabeledBox&, const LabeledBox&) = default;
};

}  // namespace posedet
