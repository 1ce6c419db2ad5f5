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

// Geometric priors over proposal boxes: Gaussians on log aspect ratio and
// log half-perimeter, and pose-relative 2-D Gaussian mixtures on the box
// center, one per informative joint.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "posedet/error.hpp"
#include "posedet/geometry.hpp"
#include "posedet/parallel.hpp"
#include "posedet/random.hpp"

namespace posedet {

struct PriorOptions {
  double variance_floor = 1e-4;
  double covariance_floor = 1e-4;
  // A component whose responsibility mass falls below this fraction of n
  // is removed.
  double mass_floor_fraction = 1e-3;
  // Relative log-likelihood gain below which EM stops.
  double em_tol = 1e-6;
  int max_iters = 200;
  int m_max = 5;
  int restarts = 5;
  std::size_t min_class_samples = 4;
  std::size_t joints_per_class = 2;
  std::uint64_t seed = 0;
  int workers = 1;
};

// ---------------------------------------------------------------------------
// 1-D Gaussian

struct Gaussian1D {
  double mean = 0.0;
  double variance = 1.0;

  double log_density(double x) const {
    const double d = x - mean;
    return -0.5 * std::log(2.0 * std::numbers::pi * variance) - d * d / (2.0 * variance);
  }

  friend bool operator==(const Gaussian1D&, const Gaussian1D&) = default;
};

/// Maximum-likelihood fit (variance divides by n), clamped to the floor.
inline Gaussian1D fit_gaussian_1d(std::span<const double> samples, double variance_floor = 1e-4) {
  if (samples.size() < 2) {
    throw Error(ErrorKind::TooFewSamples, "1-D Gaussian needs at least 2 samples, got " +
                                              std::to_string(samples.size()));
  }
  for (double s : samples) {
    if (!std::isfinite(s)) throw Error(ErrorKind::NonFiniteInput, "non-finite sample");
  }
  const double n = static_cast<double>(samples.size());
  const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / n;
  double ss = 0.0;
  for (double s : samples) ss += (s - mean) * (s - mean);
  return {mean, std::max(ss / n, variance_floor)};
}

// ---------------------------------------------------------------------------
// 2-D Gaussian mixtures

/// Symmetric 2x2 covariance.
struct Cov2 {
  double xx = 1.0;
  double xy = 0.0;
  double yy = 1.0;

  double det() const { return xx * yy - xy * xy; }

  // Eigenvalues, larger first.
  std::pair<double, double> eigenvalues() const {
    const double half_trace = 0.5 * (xx + yy);
    const double disc = std::sqrt(0.25 * (xx - yy) * (xx - yy) + xy * xy);
    return {half_trace + disc, half_trace - disc};
  }

  friend bool operator==(const Cov2&, const Cov2&) = default;
};

/// Raises every eigenvalue of `c` to at least `floor`. This is also the
/// maximizer of the Gaussian likelihood over covariances with that
/// eigenvalue bound, so EM stays monotone when it is applied in the M-step.
inline Cov2 floor_eigenvalues(const Cov2& c, double floor) {
  auto [l1, l2] = c.eigenvalues();
  if (l2 >= floor) return c;
  double vx = 1.0, vy = 0.0;
  if (std::abs(c.xy) > 1e-300) {
    vx = l1 - c.yy;
    vy = c.xy;
    const double norm = std::hypot(vx, vy);
    vx /= norm;
    vy /= norm;
  } else if (c.yy > c.xx) {
    vx = 0.0;
    vy = 1.0;
  }
  l1 = std::max(l1, floor);
  l2 = std::max(l2, floor);
  // v2 = (-vy, vx)
  return {l1 * vx * vx + l2 * vy * vy, (l1 - l2) * vx * vy, l1 * vy * vy + l2 * vx * vx};
}

inline double gaussian2_log_density(Point2 x, Point2 mean, const Cov2& cov) {
  const double det = cov.det();
  const double dx = x.x - mean.x;
  const double dy = x.y - mean.y;
  const double quad = (cov.yy * dx * dx - 2.0 * cov.xy * dx * dy + cov.xx * dy * dy) / det;
  return -std::log(2.0 * std::numbers::pi) - 0.5 * std::log(det) - 0.5 * quad;
}

inline double log_sum_exp(std::span<const double> values) {
  double hi = -std::numeric_limits<double>::infinity();
  for (double v : values) hi = std::max(hi, v);
  if (!std::isfinite(hi)) return hi;
  double sum = 0.0;
  for (double v : values) sum += std::exp(v - hi);
  return hi + std::log(sum);
}

struct GmmComponent {
  double weight = 1.0;
  Point2 mean;
  Cov2 cov;

  friend bool operator==(const GmmComponent&, const GmmComponent&) = default;
};

struct Gmm2D {
  std::vector<GmmComponent> components;

  std::size_t size() const { return components.size(); }

  double log_density(Point2 x) const {
    std::vector<double> terms;
    terms.reserve(components.size());
    for (const auto& c : components) {
      terms.push_back(std::log(c.weight) + gaussian2_log_density(x, c.mean, c.cov));
    }
    return log_sum_exp(terms);
  }

  double log_likelihood(std::span<const Point2> xs) const {
    double ll = 0.0;
    for (const auto& x : xs) ll += log_density(x);
    return ll;
  }

  friend bool operator==(const Gmm2D&, const Gmm2D&) = default;
};

struct EmResult {
  Gmm2D gmm;
  double log_likelihood = 0.0;
  // Log-likelihood after every E-step, in order.
  std::vector<double> trace;
  int iterations = 0;
  bool converged = false;
  int requested_components = 0;
  // Components dropped because their responsibility mass collapsed.
  int removed_components = 0;
};

namespace detail {

inline Cov2 weighted_scatter(std::span<const Point2> xs, std::span<const double> w, Point2 mean,
                             double mass) {
  Cov2 s{0.0, 0.0, 0.0};
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i].x - mean.x;
    const double dy = xs[i].y - mean.y;
    s.xx += w[i] * dx * dx;
    s.xy += w[i] * dx * dy;
    s.yy += w[i] * dy * dy;
  }
  s.xx /= mass;
  s.xy /= mass;
  s.yy /= mass;
  return s;
}

inline double sq_dist(Point2 a, Point2 b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  return dx * dx + dy * dy;
}

// Farthest-point seeding from a random first center, then one hard
// assignment pass to initialize weights, means and covariances.
inline Gmm2D seed_mixture(std::span<const Point2> xs, int m, std::uint64_t seed, double cov_floor) {
  const std::size_t n = xs.size();
  Rng rng(seed);
  std::vector<std::size_t> centers{rng.index(n)};
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  while (centers.size() < static_cast<std::size_t>(m)) {
    const Point2 last = xs[centers.back()];
    std::size_t best = 0;
    double best_d = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], sq_dist(xs[i], last));
      if (nearest[i] > best_d) {
        best_d = nearest[i];
        best = i;
      }
    }
    centers.push_back(best);
  }

  std::vector<std::size_t> assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < centers.size(); ++k) {
      const double d = sq_dist(xs[i], xs[centers[k]]);
      if (d < best_d) {
        best_d = d;
        assign[i] = k;
      }
    }
  }

  Gmm2D gmm;
  std::vector<double> w(n);
  Cov2 pooled{0.0, 0.0, 0.0};
  std::vector<std::size_t> counts(centers.size(), 0);
  for (std::size_t k = 0; k < centers.size(); ++k) {
    for (std::size_t i = 0; i < n; ++i) w[i] = assign[i] == k ? 1.0 : 0.0;
    const double mass = std::accumulate(w.begin(), w.end(), 0.0);
    counts[k] = static_cast<std::size_t>(mass);
    if (mass == 0.0) {
      // Duplicate seed: reported as an empty component and dropped by EM.
      gmm.components.push_back({0.0, xs[centers[k]], Cov2{}});
      continue;
    }
    Point2 mean{0.0, 0.0};
    for (std::size_t i = 0; i < n; ++i) {
      mean.x += w[i] * xs[i].x;
      mean.y += w[i] * xs[i].y;
    }
    mean.x /= mass;
    mean.y /= mass;
    const Cov2 s = weighted_scatter(xs, w, mean, mass);
    pooled.xx += s.xx * mass / static_cast<double>(n);
    pooled.xy += s.xy * mass / static_cast<double>(n);
    pooled.yy += s.yy * mass / static_cast<double>(n);
    gmm.components.push_back({mass / static_cast<double>(n), mean, s});
  }
  for (std::size_t k = 0; k < gmm.components.size(); ++k) {
    auto& c = gmm.components[k];
    // Tiny clusters (typically a single far outlier) borrow the pooled
    // within-cluster covariance.
    c.cov = floor_eigenvalues(counts[k] >= 3 ? c.cov : pooled, cov_floor);
  }
  return gmm;
}

}  // namespace detail

/**
 * Fits an m-component full-covariance mixture to 2-D points by EM.
 *
 * Iterates E-step / M-step until the relative log-likelihood gain drops
 * below `em_tol` or `max_iters` E-steps have run. Covariances are floored
 * in every M-step. If a component's responsibility mass falls below
 * `mass_floor_fraction * n` it is removed and the fit restarts with m-1
 * components; the count of removed components is reported.
 */
inline EmResult gmm_em_fit(std::span<const Point2> xs, int m, std::uint64_t seed,
                           const PriorOptions& opt = {}) {
  if (m < 1) throw Error(ErrorKind::InvalidArgument, "component count must be >= 1");
  const std::size_t n = xs.size();
  if (n < 4 * static_cast<std::size_t>(m)) {
    throw Error(ErrorKind::TooFewSamples, "EM with " + std::to_string(m) + " components needs " +
                                              std::to_string(4 * m) + " samples, got " +
                                              std::to_string(n));
  }
  for (const auto& x : xs) {
    if (!std::isfinite(x.x) || !std::isfinite(x.y)) {
      throw Error(ErrorKind::NonFiniteInput, "non-finite offset");
    }
  }

  EmResult result;
  result.requested_components = m;
  const double mass_floor = opt.mass_floor_fraction * static_cast<double>(n);

  for (int active = m; active >= 1; --active) {
    Gmm2D gmm = detail::seed_mixture(xs, active, seed, opt.covariance_floor);
    const bool empty_seed = std::any_of(gmm.components.begin(), gmm.components.end(), [&](const GmmComponent& c) {
      return c.weight <= 0.0 || c.weight * static_cast<double>(n) < mass_floor;
    });
    if (empty_seed) {
      ++result.removed_components;
      continue;
    }
    const auto k_count = static_cast<std::size_t>(active);
    std::vector<double> resp(n * k_count);
    std::vector<double> terms(k_count);
    std::vector<double> column(n);
    std::vector<double> trace;
    bool degenerate = false;
    bool converged = false;
    int iterations = 0;

    while (true) {
      // E-step
      double ll = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < k_count; ++k) {
          const auto& c = gmm.components[k];
          terms[k] = std::log(c.weight) + gaussian2_log_density(xs[i], c.mean, c.cov);
        }
        const double lse = log_sum_exp(terms);
        ll += lse;
        for (std::size_t k = 0; k < k_count; ++k) resp[i * k_count + k] = std::exp(terms[k] - lse);
      }
      if (!std::isfinite(ll)) throw Error(ErrorKind::NumericalFailure, "EM log-likelihood is not finite");
      ++iterations;
      if (!trace.empty()) {
        const double prev = trace.back();
        if (ll < prev - 1e-8 * std::max(1.0, std::abs(prev))) {
          throw Error(ErrorKind::NumericalFailure, "EM log-likelihood decreased");
        }
        if (ll - prev < opt.em_tol * std::abs(prev)) {
          trace.push_back(ll);
          converged = true;
          break;
        }
      }
      trace.push_back(ll);
      if (iterations >= opt.max_iters) break;

      // M-step
      for (std::size_t k = 0; k < k_count; ++k) {
        double mass = 0.0;
        Point2 mean{0.0, 0.0};
        for (std::size_t i = 0; i < n; ++i) {
          column[i] = resp[i * k_count + k];
          mass += column[i];
          mean.x += column[i] * xs[i].x;
          mean.y += column[i] * xs[i].y;
        }
        if (mass < mass_floor || mass <= 0.0) {
          degenerate = true;
          break;
        }
        mean.x /= mass;
        mean.y /= mass;
        auto& c = gmm.components[k];
        c.weight = mass / static_cast<double>(n);
        c.mean = mean;
        c.cov = floor_eigenvalues(detail::weighted_scatter(xs, column, mean, mass), opt.covariance_floor);
      }
      if (degenerate) break;
    }

    if (degenerate) {
      ++result.removed_components;
      continue;
    }
    result.gmm = std::move(gmm);
    result.log_likelihood = trace.back();
    result.trace = std::move(trace);
    result.iterations = iterations;
    result.converged = converged;
    return result;
  }
  throw Error(ErrorKind::NumericalFailure, "EM failed to fit even a single component");
}

/// Bayesian information criterion of a full-covariance 2-D mixture:
/// -2 logL + (6m - 1) ln n. Lower is better.
inline double bic(double log_likelihood, int m, std::size_t n) {
  const double params = 6.0 * m - 1.0;
  return -2.0 * log_likelihood + params * std::log(static_cast<double>(n));
}

struct BicEntry {
  int requested_components = 0;
  int components = 0;
  double log_likelihood = 0.0;
  double bic = 0.0;
  std::uint64_t seed = 0;

  friend bool operator==(const BicEntry&, const BicEntry&) = default;
};

struct JointPriorCandidate {
  int joint_id = 0;
  Gmm2D gmm;
  double train_log_likelihood = 0.0;
  double bic = 0.0;
  std::size_t num_samples = 0;
  std::vector<BicEntry> bic_table;
};

/**
 * Sweeps component counts 1..m_max (skipping counts with fewer than 4m
 * samples), keeps the best of `restarts` seeded EM runs per count, and
 * returns the fit with the lowest BIC. Ties go to fewer components.
 */
inline JointPriorCandidate select_components(std::span<const Point2> xs, int joint_id,
                                             const PriorOptions& opt, std::uint64_t seed) {
  if (xs.size() < 4) {
    throw Error(ErrorKind::TooFewSamples, "component selection needs at least 4 offsets");
  }
  JointPriorCandidate best;
  best.joint_id = joint_id;
  best.num_samples = xs.size();
  bool have = false;
  const int restarts = std::max(1, opt.restarts);
  for (int m = 1; m <= opt.m_max; ++m) {
    if (xs.size() < 4 * static_cast<std::size_t>(m)) break;
    std::optional<EmResult> top;
    std::uint64_t top_seed = 0;
    for (int r = 0; r < restarts; ++r) {
      const std::uint64_t s = mix_seed(seed, static_cast<std::uint64_t>(m), static_cast<std::uint64_t>(r));
      EmResult fit = gmm_em_fit(xs, m, s, opt);
      if (!top || fit.log_likelihood > top->log_likelihood) {
        top = std::move(fit);
        top_seed = s;
      }
    }
    const int actual = static_cast<int>(top->gmm.size());
    const double score = bic(top->log_likelihood, actual, xs.size());
    best.bic_table.push_back({m, actual, top->log_likelihood, score, top_seed});
    if (!have || score < best.bic) {
      have = true;
      best.gmm = top->gmm;
      best.train_log_likelihood = top->log_likelihood;
      best.bic = score;
    }
  }
  return best;
}

/// Picks the `count` joints whose selected mixtures have the highest total
/// training log-likelihood; ties go to the lower joint id. Returns fewer
/// joints only when fewer candidates exist.
inline std::vector<int> select_joints(std::span<const JointPriorCandidate> candidates,
                                      std::size_t count = 2) {
  if (candidates.empty()) throw Error(ErrorKind::NoCandidates, "no joint candidates to select from");
  std::vector<const JointPriorCandidate*> order;
  for (const auto& c : candidates) order.push_back(&c);
  std::sort(order.begin(), order.end(), [](const auto* a, const auto* b) {
    if (a->train_log_likelihood != b->train_log_likelihood) {
      return a->train_log_likelihood > b->train_log_likelihood;
    }
    return a->joint_id < b->joint_id;
  });
  std::vector<int> out;
  for (std::size_t i = 0; i < std::min(count, order.size()); ++i) out.push_back(order[i]->joint_id);
  return out;
}

// ---------------------------------------------------------------------------
// Per-class model

struct JointSummary {
  int joint_id = 0;
  std::size_t num_samples = 0;
  int components = 0;
  double train_log_likelihood = 0.0;
  std::vector<BicEntry> bic_table;

  friend bool operator==(const JointSummary&, const JointSummary&) = default;
};

struct SelectedJoint {
  int joint_id = 0;
  Gmm2D gmm;
  // Mean training log-density, used in place of the mixture when the
  // joint is missing at inference.
  double fallback_log_density = 0.0;

  friend bool operator==(const SelectedJoint&, const SelectedJoint&) = default;
};

struct ClassPriorModel {
  std::string class_name;
  Gaussian1D aspect;
  Gaussian1D perimeter;
  std::vector<SelectedJoint> joints;
  std::size_t num_samples = 0;
  std::uint64_t seed = 0;
  std::vector<JointSummary> candidates;

  std::vector<int> selected_joint_ids() const {
    std::vector<int> ids;
    for (const auto& j : joints) ids.push_back(j.joint_id);
    return ids;
  }

  friend bool operator==(const ClassPriorModel&, const ClassPriorModel&) = default;
};

struct JointTerm {
  int joint_id = 0;
  double log_density = 0.0;
  bool fallback = false;
};

struct PriorTerms {
  double log_aspect = 0.0;
  double log_perimeter = 0.0;
  std::vector<JointTerm> joints;

  double log_center() const {
    double s = 0.0;
    for (const auto& j : joints) s += j.log_density;
    return s;
  }
  double total() const { return log_aspect + log_perimeter + log_center(); }
};

enum class MissingJointPolicy { Fallback, Error };

/// Individual log factors of the geometric prior for one box and pose.
inline PriorTerms prior_terms(const ClassPriorModel& model, const GeometricFeatures& g, const Pose& pose,
                              MissingJointPolicy policy = MissingJointPolicy::Fallback) {
  PriorTerms t;
  t.log_aspect = model.aspect.log_density(g.a);
  t.log_perimeter = model.perimeter.log_density(g.r);
  for (const auto& j : model.joints) {
    if (pose.has(j.joint_id)) {
      t.joints.push_back({j.joint_id, j.gmm.log_density(offset(g.center(), pose[j.joint_id])), false});
    } else if (policy == MissingJointPolicy::Fallback) {
      t.joints.push_back({j.joint_id, j.fallback_log_density, true});
    } else {
      throw Error(ErrorKind::MissingJoint, std::string(joint_name(j.joint_id)) + " is not available");
    }
  }
  return t;
}

inline double log_prior(const ClassPriorModel& model, const GeometricFeatures& g, const Pose& pose,
                        MissingJointPolicy policy = MissingJointPolicy::Fallback) {
  return prior_terms(model, g, pose, policy).total();
}

struct PriorSample {
  BoundingBox box;
  Pose pose;
  std::string label;
};

struct PriorFitResult {
  std::map<std::string, ClassPriorModel> models;
  std::vector<std::string> warnings;
};

/**
 * Learns a ClassPriorModel for every class in `classes` from ground-truth
 * boxes paired with poses. Classes with fewer than `min_class_samples`
 * boxes are skipped with a warning. (class, joint) fits run on
 * `opt.workers` threads; results do not depend on the worker count.
 */
inline PriorFitResult fit_class_priors(std::span<const PriorSample> samples,
                                       std::span<const std::string> classes, const PriorOptions& opt = {}) {
  PriorFitResult out;
  struct Task {
    std::size_t class_slot;
    int joint;
    std::vector<Point2> offsets;
    std::uint64_t seed;
    std::optional<JointPriorCandidate> result;
  };
  struct Pending {
    std::string name;
    std::vector<double> a, r;
    std::uint64_t seed;
  };
  std::vector<Pending> pending;
  std::vector<Task> tasks;

  for (const auto& name : classes) {
    Pending p{name, {}, {}, mix_seed(opt.seed, fnv1a(name))};
    std::vector<const PriorSample*> mine;
    for (const auto& s : samples) {
      if (s.label == name) mine.push_back(&s);
    }
    const std::size_t needed = std::max<std::size_t>(opt.min_class_samples, 4);
    if (mine.size() < needed) {
      out.warnings.push_back("class '" + name + "' skipped: " + std::to_string(mine.size()) +
                             " samples, need " + std::to_string(needed));
      continue;
    }
    for (const auto* s : mine) {
      const auto g = geometric_features(s->box);
      p.a.push_back(g.a);
      p.r.push_back(g.r);
    }
    for (int j = 0; j < static_cast<int>(kNumJoints); ++j) {
      std::vector<Point2> offs;
      for (const auto* s : mine) {
        if (s->pose.has(j)) offs.push_back(offset(s->box.center(), s->pose[j]));
      }
      if (offs.size() < 4) continue;
      tasks.push_back({pending.size(), j, std::move(offs), mix_seed(p.seed, static_cast<std::uint64_t>(j)), {}});
    }
    pending.push_back(std::move(p));
  }

  parallel_for(tasks.size(), opt.workers, [&](std::size_t i) {
    auto& t = tasks[i];
    t.result = select_components(t.offsets, t.joint, opt, t.seed);
  });

  for (std::size_t slot = 0; slot < pending.size(); ++slot) {
    const auto& p = pending[slot];
    std::vector<JointPriorCandidate> cands;
    for (const auto& t : tasks) {
      if (t.class_slot == slot) cands.push_back(*t.result);
    }
    if (cands.empty()) {
      out.warnings.push_back("class '" + p.name + "' skipped: no joint has enough visible samples");
      continue;
    }
    ClassPriorModel model;
    model.class_name = p.name;
    model.aspect = fit_gaussian_1d(p.a, opt.variance_floor);
    model.perimeter = fit_gaussian_1d(p.r, opt.variance_floor);
    model.num_samples = p.a.size();
    model.seed = p.seed;
    for (const auto& c : cands) {
      model.candidates.push_back({c.joint_id, c.num_samples, static_cast<int>(c.gmm.size()),
                                  c.train_log_likelihood, c.bic_table});
    }
    const auto chosen = select_joints(cands, opt.joints_per_class);
    if (chosen.size() < opt.joints_per_class) {
      out.warnings.push_back("class '" + p.name + "' uses only " + std::to_string(chosen.size()) +
                             " informative joint(s)");
    }
    for (int id : chosen) {
      const auto& c = *std::find_if(cands.begin(), cands.end(), [&](const auto& x) { return x.joint_id == id; });
      model.joints.push_back({id, c.gmm, c.train_log_likelihood / static_cast<double>(c.num_samples)});
    }
    out.models.emplace(p.name, std::move(model));
  }
  return out;
}

}  // namespace posedet
