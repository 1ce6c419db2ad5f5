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

// On-disk formats. Every document carries {"schema", "version"}; readers
// reject unknown schemas and versions instead of guessing. JSON Lines files
// start with the same header record on their first line.

#include <array>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "posedet/appearance.hpp"
#include "posedet/config.hpp"
#include "posedet/detection.hpp"
#include "posedet/error.hpp"
#include "posedet/evaluation.hpp"
#include "posedet/geometry.hpp"
#include "posedet/priors.hpp"

namespace posedet {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr int kFormatVersion = 1;

namespace schema {
inline constexpr const char* kManifest = "posedet.manifest";
inline constexpr const char* kPose = "posedet.pose";
inline constexpr const char* kLabelMap = "posedet.labelmap";
inline constexpr const char* kProposals = "posedet.proposals";
inline constexpr const char* kFeatureIndex = "posedet.feature_index";
inline constexpr const char* kPriors = "posedet.priors";
inline constexpr const char* kAppearance = "posedet.appearance";
inline constexpr const char* kPatches = "posedet.patches";
inline constexpr const char* kDetections = "posedet.detections";
inline constexpr const char* kMetrics = "posedet.metrics";
inline constexpr const char* kProposalStats = "posedet.proposal_stats";
inline constexpr const char* kSynth = "posedet.synth";
}  // namespace schema

inline json header(const char* schema_id) { return {{"schema", schema_id}, {"version", kFormatVersion}}; }

inline void check_header(const json& j, const char* schema_id, const std::string& where) {
  if (!j.is_object() || !j.contains("schema") || !j.contains("version")) {
    throw Error(ErrorKind::FormatError, where + ": missing schema/version header");
  }
  if (j.at("schema") != schema_id) {
    throw Error(ErrorKind::FormatError, where + ": expected schema " + schema_id + ", got " + j.at("schema").dump());
  }
  if (j.at("version") != kFormatVersion) {
    throw Error(ErrorKind::VersionMismatch, where + ": unsupported version " + j.at("version").dump());
  }
}

// ---------------------------------------------------------------------------
// Files

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::MissingFile, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes through a temporary file and renames it into place.
inline void write_atomic(const fs::path& path, std::string_view bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::MissingFile, "cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorKind::MissingFile, "write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

inline json parse_json(std::string_view text, const std::string& where) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::FormatError, where + ": " + e.what());
  }
}

inline json read_json(const fs::path& path) { return parse_json(read_text(path), path.string()); }

inline void write_json(const fs::path& path, const json& j) { write_atomic(path, j.dump(2) + "\n"); }

inline std::vector<json> read_jsonl(const fs::path& path, const char* schema_id) {
  std::istringstream in(read_text(path));
  std::vector<json> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = parse_json(line, path.string());
    if (first) {
      check_header(j, schema_id, path.string());
      first = false;
      continue;
    }
    rows.push_back(std::move(j));
  }
  if (first) throw Error(ErrorKind::FormatError, path.string() + ": missing header record");
  return rows;
}

// Shortest representation that parses back to the same double.
inline std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

// ---------------------------------------------------------------------------
// Primitive values

inline json box_to_json(const BoundingBox& b) { return json::array({b.x1(), b.y1(), b.x2(), b.y2()}); }

inline BoundingBox box_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4) throw Error(ErrorKind::FormatError, "box must be [x1, y1, x2, y2]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

inline json pose_to_json(const Pose& pose) {
  json j = header(schema::kPose);
  json joints = json::object();
  for (std::size_t k = 0; k < kNumJoints; ++k) {
    const std::string name(kJointNames[k]);
    if (pose.visible[k]) {
      joints[name] = json::array({pose.joints[k].x, pose.joints[k].y});
    } else {
      joints[name] = nullptr;
    }
  }
  j["joints"] = std::move(joints);
  return j;
}

/// Joints are addressed by canonical name; absent or null joints are
/// invisible and unknown names are rejected.
inline Pose pose_from_json(const json& j, const std::string& where = "pose") {
  check_header(j, schema::kPose, where);
  Pose pose;
  pose.visible.fill(false);
  for (const auto& [name, value] : j.at("joints").items()) {
    const auto idx = joint_index(name);
    if (!idx) throw Error(ErrorKind::UnknownJoint, where + ": unknown joint name '" + name + "'");
    if (value.is_null()) continue;
    if (!value.is_array() || value.size() != 2) {
      throw Error(ErrorKind::FormatError, where + ": joint '" + name + "' must be [x, y] or null");
    }
    const Point2 p{value[0].get<double>(), value[1].get<double>()};
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
      throw Error(ErrorKind::NonFiniteInput, where + ": joint '" + name + "' is not finite");
    }
    pose.joints[static_cast<std::size_t>(*idx)] = p;
    pose.visible[static_cast<std::size_t>(*idx)] = true;
  }
  return pose;
}

/// Label maps come as {"encoding": "flat", "data": [ids...]} or as
/// {"encoding": "rle", "data": [id, run, id, run, ...]}.
inline LabelMap labelmap_from_json(const json& j, const std::string& where = "labelmap") {
  check_header(j, schema::kLabelMap, where);
  LabelMap m;
  m.width = j.at("width").get<int>();
  m.height = j.at("height").get<int>();
  for (const auto& [id, name] : j.at("legend").items()) m.legend[std::stoi(id)] = name.get<std::string>();
  const std::string enc = j.value("encoding", "flat");
  const auto& data = j.at("data");
  if (enc == "flat") {
    m.labels = data.get<std::vector<int>>();
  } else if (enc == "rle") {
    if (data.size() % 2 != 0) throw Error(ErrorKind::FormatError, where + ": rle data must be id/run pairs");
    for (std::size_t i = 0; i < data.size(); i += 2) {
      const int id = data[i].get<int>();
      const auto run = data[i + 1].get<std::int64_t>();
      if (run < 0) throw Error(ErrorKind::FormatError, where + ": negative run length");
      m.labels.insert(m.labels.end(), static_cast<std::size_t>(run), id);
    }
  } else {
    throw Error(ErrorKind::FormatError, where + ": unknown label map encoding '" + enc + "'");
  }
  m.validate();
  return m;
}

inline json labelmap_to_json(const LabelMap& m, bool rle = true) {
  json j = header(schema::kLabelMap);
  j["width"] = m.width;
  j["height"] = m.height;
  json legend = json::object();
  for (const auto& [id, name] : m.legend) legend[std::to_string(id)] = name;
  j["legend"] = legend;
  j["encoding"] = rle ? "rle" : "flat";
  if (!rle) {
    j["data"] = m.labels;
  } else {
    json data = json::array();
    for (std::size_t i = 0; i < m.labels.size();) {
      std::size_t k = i;
      while (k < m.labels.size() && m.labels[k] == m.labels[i]) ++k;
      data.push_back(m.labels[i]);
      data.push_back(k - i);
      i = k;
    }
    j["data"] = std::move(data);
  }
  return j;
}

// ---------------------------------------------------------------------------
// Proposals (JSON Lines)

inline std::string proposals_to_jsonl(const std::string& image_id, std::span<const BoundingBox> boxes) {
  json h = header(schema::kProposals);
  h["image_id"] = image_id;
  std::string out = h.dump() + "\n";
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    out += json{{"id", i}, {"box", box_to_json(boxes[i])}}.dump() + "\n";
  }
  return out;
}

/// Proposal ids must be 0..n-1 in order; the id is the row of the
/// image's feature matrix.
inline std::vector<BoundingBox> read_proposals(const fs::path& path) {
  std::vector<BoundingBox> out;
  for (const auto& row : read_jsonl(path, schema::kProposals)) {
    if (row.at("id").get<std::size_t>() != out.size()) {
      throw Error(ErrorKind::FormatError, path.string() + ": proposal ids must be consecutive from 0");
    }
    out.push_back(box_from_json(row.at("box")));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Feature matrices: little-endian header of four u64 (magic, version,
// rows, dim) followed by row-major f32 values. A JSON sidecar at
// "<path>.json" maps each row to (image id, box id).

inline constexpr std::uint64_t kFeatureMagic = 0x5441454654454450ULL;  // "PDETFEAT"

struct FeatureRow {
  std::string image_id;
  std::size_t box_id = 0;

  friend bool operator==(const FeatureRow&, const FeatureRow&) = default;
};

namespace detail {

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint64_t get_u64(std::string_view in, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  return v;
}

}  // namespace detail

inline std::string encode_features(const FeatureMatrix& m) {
  std::string out;
  out.reserve(32 + m.data().size() * 4);
  detail::put_u64(out, kFeatureMagic);
  detail::put_u64(out, kFormatVersion);
  detail::put_u64(out, m.rows());
  detail::put_u64(out, m.dim());
  for (float f : m.data()) {
    std::uint32_t bits = 0;
    std::memcpy(&bits, &f, sizeof bits);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
  }
  return out;
}

inline FeatureMatrix decode_features(std::string_view bytes, const std::string& where = "features") {
  if (bytes.size() < 32) throw Error(ErrorKind::FormatError, where + ": truncated feature header");
  if (detail::get_u64(bytes, 0) != kFeatureMagic) throw Error(ErrorKind::FormatError, where + ": bad feature magic");
  if (detail::get_u64(bytes, 8) != kFormatVersion) {
    throw Error(ErrorKind::VersionMismatch, where + ": unsupported feature version");
  }
  const std::uint64_t rows = detail::get_u64(bytes, 16);
  const std::uint64_t dim = detail::get_u64(bytes, 24);
  if (dim != 0 && rows > (bytes.size() - 32) / 4 / dim) {
    throw Error(ErrorKind::FormatError, where + ": feature payload size mismatch");
  }
  if (bytes.size() != 32 + rows * dim * 4) throw Error(ErrorKind::FormatError, where + ": feature payload size mismatch");
  std::vector<float> data(rows * dim);
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::uint32_t bits = 0;
    for (int k = 0; k < 4; ++k) {
      bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[32 + 4 * i + k])) << (8 * k);
    }
    std::memcpy(&data[i], &bits, sizeof bits);
  }
  return {rows, dim, std::move(data)};
}

inline fs::path sidecar_path(const fs::path& features) {
  fs::path p = features;
  p += ".json";
  return p;
}

inline json feature_index_to_json(std::span<const FeatureRow> rows) {
  json j = header(schema::kFeatureIndex);
  json arr = json::array();
  for (const auto& r : rows) arr.push_back({{"image_id", r.image_id}, {"box_id", r.box_id}});
  j["rows"] = std::move(arr);
  return j;
}

inline std::vector<FeatureRow> feature_index_from_json(const json& j, const std::string& where) {
  check_header(j, schema::kFeatureIndex, where);
  std::vector<FeatureRow> rows;
  for (const auto& r : j.at("rows")) rows.push_back({r.at("image_id").get<std::string>(), r.at("box_id").get<std::size_t>()});
  return rows;
}

struct IndexedFeatures {
  FeatureMatrix matrix;
  std::vector<FeatureRow> rows;
};

inline void write_features(const fs::path& path, const FeatureMatrix& m, std::span<const FeatureRow> rows) {
  if (rows.size() != m.rows()) throw Error(ErrorKind::AlignmentError, "feature index size != matrix rows");
  write_atomic(path, encode_features(m));
  write_json(sidecar_path(path), feature_index_to_json(rows));
}

inline IndexedFeatures read_features(const fs::path& path) {
  IndexedFeatures out;
  out.matrix = decode_features(read_text(path), path.string());
  const fs::path side = sidecar_path(path);
  out.rows = feature_index_from_json(read_json(side), side.string());
  if (out.rows.size() != out.matrix.rows()) {
    throw Error(ErrorKind::AlignmentError, path.string() + ": sidecar has " + std::to_string(out.rows.size()) +
                                               " rows, matrix has " + std::to_string(out.matrix.rows()));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Manifest

struct ManifestImage {
  std::string id;
  int width = 0;
  int height = 0;
  std::string split;
  std::optional<fs::path> pose;
  std::optional<fs::path> labelmap;
  std::optional<std::vector<LabeledBox>> ground_truth;
  std::vector<BoundingBox> excluded;
  std::optional<fs::path> proposals;
  std::optional<fs::path> features;
};

struct Manifest {
  fs::path base_dir;
  std::vector<std::string> classes;
  // Original class name -> detected class name.
  std::map<std::string, std::string> merge;
  std::vector<std::string> excluded_classes;
  std::vector<ManifestImage> images;

  std::vector<const ManifestImage*> split(std::string_view tag) const {
    std::vector<const ManifestImage*> out;
    for (const auto& img : images) {
      if (img.split == tag) out.push_back(&img);
    }
    return out;
  }

  fs::path resolve(const fs::path& p) const { return p.is_absolute() ? p : base_dir / p; }
};

inline json manifest_to_json(const Manifest& m) {
  json j = header(schema::kManifest);
  j["classes"] = m.classes;
  j["merge"] = m.merge;
  j["excluded_classes"] = m.excluded_classes;
  json imgs = json::array();
  for (const auto& img : m.images) {
    json e{{"id", img.id}, {"width", img.width}, {"height", img.height}, {"split", img.split}};
    if (img.pose) e["pose"] = img.pose->generic_string();
    if (img.labelmap) e["labelmap"] = img.labelmap->generic_string();
    if (img.ground_truth) {
      json gt = json::array();
      for (const auto& g : *img.ground_truth) gt.push_back({{"class", g.label}, {"box", box_to_json(g.box)}});
      e["ground_truth"] = std::move(gt);
    }
    if (!img.excluded.empty()) {
      json ex = json::array();
      for (const auto& b : img.excluded) ex.push_back(box_to_json(b));
      e["excluded"] = std::move(ex);
    }
    if (img.proposals) e["proposals"] = img.proposals->generic_string();
    if (img.features) e["features"] = img.features->generic_string();
    imgs.push_back(std::move(e));
  }
  j["images"] = std::move(imgs);
  return j;
}

/**
 * Parses a manifest. Relative paths resolve against `base_dir`; with
 * `check_files` every referenced file must exist, and a missing one is
 * reported with the id of the image that needs it.
 */
inline Manifest manifest_from_json(const json& j, const fs::path& base_dir, bool check_files = true) {
  check_header(j, schema::kManifest, "manifest");
  Manifest m;
  m.base_dir = base_dir;
  m.classes = j.at("classes").get<std::vector<std::string>>();
  for (const auto& c : m.classes) m.merge[c] = c;
  if (j.contains("merge")) {
    for (const auto& [from, to] : j.at("merge").items()) m.merge[from] = to.get<std::string>();
  }
  for (const auto& [from, to] : m.merge) {
    if (std::find(m.classes.begin(), m.classes.end(), to) == m.classes.end()) {
      throw Error(ErrorKind::InvalidArgument, "manifest: merge target '" + to + "' is not a class");
    }
  }
  if (j.contains("excluded_classes")) m.excluded_classes = j.at("excluded_classes").get<std::vector<std::string>>();

  std::set<std::string> seen;
  for (const auto& e : j.at("images")) {
    ManifestImage img;
    img.id = e.at("id").get<std::string>();
    if (!seen.insert(img.id).second) throw Error(ErrorKind::InvalidArgument, "manifest: duplicate image id '" + img.id + "'");
    img.width = e.at("width").get<int>();
    img.height = e.at("height").get<int>();
    if (img.width <= 0 || img.height <= 0) {
      throw Error(ErrorKind::InvalidArgument, "image '" + img.id + "': width and height must be positive");
    }
    img.split = e.at("split").get<std::string>();
    if (img.split != "train" && img.split != "val" && img.split != "test") {
      throw Error(ErrorKind::InvalidArgument, "image '" + img.id + "': split must be train, val or test");
    }
    auto path_field = [&](const char* key) -> std::optional<fs::path> {
      if (!e.contains(key) || e.at(key).is_null()) return std::nullopt;
      fs::path p = e.at(key).get<std::string>();
      if (check_files && !fs::exists(m.resolve(p))) {
        throw Error(ErrorKind::MissingFile,
                    "image '" + img.id + "': " + key + " file '" + p.generic_string() + "' not found");
      }
      return p;
    };
    img.pose = path_field("pose");
    img.labelmap = path_field("labelmap");
    img.proposals = path_field("proposals");
    img.features = path_field("features");
    if (img.features && check_files && !fs::exists(m.resolve(sidecar_path(*img.features)))) {
      throw Error(ErrorKind::MissingFile, "image '" + img.id + "': feature index '" +
                                              sidecar_path(*img.features).generic_string() + "' not found");
    }
    if (e.contains("ground_truth")) {
      std::vector<LabeledBox> gt;
      for (const auto& g : e.at("ground_truth")) {
        const std::string label = g.at("class").get<std::string>();
        auto it = m.merge.find(label);
        if (it == m.merge.end()) {
          throw Error(ErrorKind::UnknownLabel, "image '" + img.id + "': unknown class '" + label + "'");
        }
        gt.push_back({it->second, box_from_json(g.at("box"))});
      }
      img.ground_truth = std::move(gt);
    }
    if (e.contains("excluded")) {
      for (const auto& b : e.at("excluded")) img.excluded.push_back(box_from_json(b));
    }
    m.images.push_back(std::move(img));
  }
  return m;
}

inline Manifest load_manifest(const fs::path& path, bool check_files = true) {
  return manifest_from_json(read_json(path), path.parent_path(), check_files);
}

// ---------------------------------------------------------------------------
// Prior models

inline json gmm_to_json(const Gmm2D& g) {
  json comps = json::array();
  for (const auto& c : g.components) {
    comps.push_back({{"weight", c.weight},
                     {"mean", json::array({c.mean.x, c.mean.y})},
                     {"covariance", json::array({c.cov.xx, c.cov.xy, c.cov.yy})}});
  }
  return comps;
}

inline Gmm2D gmm_from_json(const json& j) {
  Gmm2D g;
  for (const auto& c : j) {
    const auto& mean = c.at("mean");
    const auto& cov = c.at("covariance");
    g.components.push_back({c.at("weight").get<double>(),
                            {mean[0].get<double>(), mean[1].get<double>()},
                            {cov[0].get<double>(), cov[1].get<double>(), cov[2].get<double>()}});
  }
  return g;
}

inline json bic_table_to_json(std::span<const BicEntry> table) {
  json arr = json::array();
  for (const auto& e : table) {
    arr.push_back({{"m", e.requested_components},
                   {"components", e.components},
                   {"log_likelihood", e.log_likelihood},
                   {"bic", e.bic},
                   {"seed", e.seed}});
  }
  return arr;
}

inline std::vector<BicEntry> bic_table_from_json(const json& j) {
  std::vector<BicEntry> out;
  for (const auto& e : j) {
    out.push_back({e.at("m").get<int>(), e.at("components").get<int>(), e.at("log_likelihood").get<double>(),
                   e.at("bic").get<double>(), e.at("seed").get<std::uint64_t>()});
  }
  return out;
}

inline int joint_from_name(const std::string& name) {
  const auto idx = joint_index(name);
  if (!idx) throw Error(ErrorKind::UnknownJoint, "unknown joint name '" + name + "'");
  return *idx;
}

inline json prior_model_to_json(const ClassPriorModel& m) {
  json j;
  j["class"] = m.class_name;
  j["num_samples"] = m.num_samples;
  j["seed"] = m.seed;
  j["aspect"] = {{"mean", m.aspect.mean}, {"variance", m.aspect.variance}};
  j["perimeter"] = {{"mean", m.perimeter.mean}, {"variance", m.perimeter.variance}};
  json selected = json::array();
  json gmms = json::array();
  for (const auto& s : m.joints) {
    selected.push_back(std::string(joint_name(s.joint_id)));
    gmms.push_back({{"joint", std::string(joint_name(s.joint_id))},
                    {"fallback_log_density", s.fallback_log_density},
                    {"components", gmm_to_json(s.gmm)}});
  }
  j["selected_joints"] = std::move(selected);
  j["joint_gmms"] = std::move(gmms);
  json cands = json::array();
  for (const auto& c : m.candidates) {
    cands.push_back({{"joint", std::string(joint_name(c.joint_id))},
                     {"num_samples", c.num_samples},
                     {"components", c.components},
                     {"train_log_likelihood", c.train_log_likelihood},
                     {"bic_table", bic_table_to_json(c.bic_table)}});
  }
  j["joints"] = std::move(cands);
  return j;
}

inline ClassPriorModel prior_model_from_json(const json& j) {
  ClassPriorModel m;
  m.class_name = j.at("class").get<std::string>();
  m.num_samples = j.at("num_samples").get<std::size_t>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.aspect = {j.at("aspect").at("mean").get<double>(), j.at("aspect").at("variance").get<double>()};
  m.perimeter = {j.at("perimeter").at("mean").get<double>(), j.at("perimeter").at("variance").get<double>()};
  for (const auto& g : j.at("joint_gmms")) {
    m.joints.push_back({joint_from_name(g.at("joint").get<std::string>()), gmm_from_json(g.at("components")),
                        g.at("fallback_log_density").get<double>()});
  }
  for (const auto& c : j.at("joints")) {
    m.candidates.push_back({joint_from_name(c.at("joint").get<std::string>()), c.at("num_samples").get<std::size_t>(),
                            c.at("components").get<int>(), c.at("train_log_likelihood").get<double>(),
                            bic_table_from_json(c.at("bic_table"))});
  }
  return m;
}

struct PriorDocument {
  std::map<std::string, ClassPriorModel> models;
  std::vector<std::string> warnings;
  std::uint64_t seed = 0;
};

inline json priors_to_json(const PriorFitResult& fit, const PipelineConfig& cfg) {
  json j = header(schema::kPriors);
  j["seed"] = cfg.seed;
  j["options"] = {{"m_max", cfg.prior.m_max},
                  {"restarts", cfg.prior.restarts},
                  {"variance_floor", cfg.prior.variance_floor},
                  {"covariance_floor", cfg.prior.covariance_floor},
                  {"mass_floor_fraction", cfg.prior.mass_floor_fraction},
                  {"em_tol", cfg.prior.em_tol},
                  {"max_iters", cfg.prior.max_iters}};
  json classes = json::array();
  for (const auto& [name, m] : fit.models) classes.push_back(prior_model_to_json(m));
  j["classes"] = std::move(classes);
  j["warnings"] = fit.warnings;
  return j;
}

inline PriorDocument priors_from_json(const json& j, const std::string& where = "priors") {
  check_header(j, schema::kPriors, where);
  PriorDocument doc;
  doc.seed = j.value("seed", std::uint64_t{0});
  for (const auto& c : j.at("classes")) {
    auto m = prior_model_from_json(c);
    doc.models.emplace(m.class_name, std::move(m));
  }
  if (j.contains("warnings")) doc.warnings = j.at("warnings").get<std::vector<std::string>>();
  return doc;
}

// ---------------------------------------------------------------------------
// Appearance models

struct AppearanceDocument {
  std::size_t dim = 0;
  std::uint64_t seed = 0;
  std::map<std::string, AppearanceModel> models;
  // Per class: validation AP of the selected (c, lambda).
  std::map<std::string, std::optional<double>> validation_ap;
  std::vector<std::string> warnings;
};

inline json appearance_to_json(const AppearanceDocument& doc) {
  json j = header(schema::kAppearance);
  j["dim"] = doc.dim;
  j["seed"] = doc.seed;
  json classes = json::array();
  for (const auto& [name, m] : doc.models) {
    json e{{"class", m.class_name},   {"w", m.svm.w},
           {"bias", m.svm.bias},      {"lambda", m.lambda},
           {"c", m.c},                {"num_positives", m.num_positives},
           {"num_negatives", m.num_negatives}, {"epochs", m.epochs},
           {"seed", m.seed}};
    auto it = doc.validation_ap.find(name);
    e["validation_ap"] = (it != doc.validation_ap.end() && it->second) ? json(*it->second) : json(nullptr);
    classes.push_back(std::move(e));
  }
  j["classes"] = std::move(classes);
  j["warnings"] = doc.warnings;
  return j;
}

inline AppearanceDocument appearance_from_json(const json& j, const std::string& where = "appearance") {
  check_header(j, schema::kAppearance, where);
  AppearanceDocument doc;
  doc.dim = j.at("dim").get<std::size_t>();
  doc.seed = j.value("seed", std::uint64_t{0});
  for (const auto& c : j.at("classes")) {
    AppearanceModel m;
    m.class_name = c.at("class").get<std::string>();
    m.svm.w = c.at("w").get<std::vector<double>>();
    m.svm.bias = c.at("bias").get<double>();
    m.lambda = c.at("lambda").get<double>();
    if (!(m.lambda > 0.0)) throw Error(ErrorKind::FormatError, where + ": lambda must be positive");
    if (m.svm.w.size() != doc.dim) throw Error(ErrorKind::DimensionMismatch, where + ": weight vector size != dim");
    m.c = c.at("c").get<double>();
    m.num_positives = c.at("num_positives").get<std::size_t>();
    m.num_negatives = c.at("num_negatives").get<std::size_t>();
    m.epochs = c.at("epochs").get<int>();
    m.seed = c.at("seed").get<std::uint64_t>();
    if (c.contains("validation_ap") && !c.at("validation_ap").is_null()) {
      doc.validation_ap[m.class_name] = c.at("validation_ap").get<double>();
    } else {
      doc.validation_ap[m.class_name] = std::nullopt;
    }
    doc.models.emplace(m.class_name, std::move(m));
  }
  if (j.contains("warnings")) doc.warnings = j.at("warnings").get<std::vector<std::string>>();
  return doc;
}

// ---------------------------------------------------------------------------
// Training patches

inline std::string_view source_name(PatchSource s) {
  switch (s) {
    case PatchSource::GroundTruth: return "gt";
    case PatchSource::Proposal: return "proposal";
    case PatchSource::ExcludedGroundTruth: return "excluded_gt";
  }
  return "proposal";
}

inline PatchSource parse_source(std::string_view s) {
  if (s == "gt") return PatchSource::GroundTruth;
  if (s == "proposal") return PatchSource::Proposal;
  if (s == "excluded_gt") return PatchSource::ExcludedGroundTruth;
  throw Error(ErrorKind::FormatError, "unknown patch source '" + std::string(s) + "'");
}

inline json patches_to_json(const PatchLabelSet& set) {
  json j = header(schema::kPatches);
  j["enlargement"] = set.enlargement;
  j["discarded"] = set.discarded;
  j["counts"] = set.counts();
  json arr = json::array();
  for (const auto& p : set.patches) {
    arr.push_back({{"id", p.id},
                   {"image_id", p.image_id},
                   {"label", p.label},
                   {"source", std::string(source_name(p.source))},
                   {"proposal_id", p.proposal_id ? json(*p.proposal_id) : json(nullptr)},
                   {"box", box_to_json(p.box)},
                   {"crop", box_to_json(p.crop)},
                   {"iou", p.best_iou}});
  }
  j["patches"] = std::move(arr);
  return j;
}

inline PatchLabelSet patches_from_json(const json& j, const std::string& where = "patches") {
  check_header(j, schema::kPatches, where);
  PatchLabelSet set;
  set.enlargement = j.at("enlargement").get<double>();
  set.discarded = j.at("discarded").get<std::size_t>();
  for (const auto& p : j.at("patches")) {
    Patch patch{p.at("id").get<std::size_t>(),
                p.at("image_id").get<std::string>(),
                p.at("label").get<std::string>(),
                parse_source(p.at("source").get<std::string>()),
                std::nullopt,
                box_from_json(p.at("box")),
                box_from_json(p.at("crop")),
                p.at("iou").get<double>()};
    if (!p.at("proposal_id").is_null()) patch.proposal_id = p.at("proposal_id").get<std::size_t>();
    set.patches.push_back(std::move(patch));
  }
  return set;
}

// ---------------------------------------------------------------------------
// Detections (JSON Lines)

inline json components_to_json(const ScoreComponents& c) {
  json j;
  j["appearance"] = c.log_appearance ? json(*c.log_appearance) : json(nullptr);
  if (c.prior) {
    j["aspect"] = c.prior->log_aspect;
    j["perimeter"] = c.prior->log_perimeter;
    json joints = json::array();
    for (const auto& t : c.prior->joints) {
      joints.push_back({{"joint", std::string(joint_name(t.joint_id))},
                        {"log_density", t.log_density},
                        {"fallback", t.fallback}});
    }
    j["joints"] = std::move(joints);
  } else {
    j["aspect"] = nullptr;
    j["perimeter"] = nullptr;
    j["joints"] = nullptr;
  }
  return j;
}

inline ScoreComponents components_from_json(const json& j) {
  ScoreComponents c;
  if (!j.at("appearance").is_null()) c.log_appearance = j.at("appearance").get<double>();
  if (!j.at("aspect").is_null()) {
    PriorTerms t;
    t.log_aspect = j.at("aspect").get<double>();
    t.log_perimeter = j.at("perimeter").get<double>();
    for (const auto& e : j.at("joints")) {
      t.joints.push_back({joint_from_name(e.at("joint").get<std::string>()), e.at("log_density").get<double>(),
                          e.at("fallback").get<bool>()});
    }
    c.prior = std::move(t);
  }
  return c;
}

inline json detection_to_json(const Detection& d) {
  return {{"image_id", d.image_id},
          {"class", d.class_name},
          {"proposal_id", d.proposal_id},
          {"x1", d.box.x1()},
          {"y1", d.box.y1()},
          {"x2", d.box.x2()},
          {"y2", d.box.y2()},
          {"log_score", d.score},
          {"components", components_to_json(d.components)}};
}

inline Detection detection_from_json(const json& j) {
  return {j.at("image_id").get<std::string>(),
          j.at("class").get<std::string>(),
          j.at("proposal_id").get<std::size_t>(),
          BoundingBox(j.at("x1").get<double>(), j.at("y1").get<double>(), j.at("x2").get<double>(),
                      j.at("y2").get<double>()),
          j.at("log_score").get<double>(),
          components_from_json(j.at("components"))};
}

inline std::string detections_to_jsonl(std::span<const Detection> dets, Ablation ablation) {
  json h = header(schema::kDetections);
  h["ablation"] = std::string(ablation_name(ablation));
  h["count"] = dets.size();
  std::string out = h.dump() + "\n";
  for (const auto& d : dets) out += detection_to_json(d).dump() + "\n";
  return out;
}

inline std::vector<Detection> read_detections(const fs::path& path) {
  std::vector<Detection> out;
  for (const auto& row : read_jsonl(path, schema::kDetections)) out.push_back(detection_from_json(row));
  return out;
}

// ---------------------------------------------------------------------------
// Metrics

inline json proposal_stats_to_json(const ProposalStats& st) {
  return {{"precision", st.precision},
          {"precision_defined", st.precision_defined},
          {"total_proposals", st.total_proposals},
          {"correct_proposals", st.correct_proposals},
          {"images", st.images},
          {"mean_proposals_per_image", st.mean_proposals_per_image},
          {"recall", st.recall},
          {"gt_count", st.gt_count},
          {"mean_recall", st.mean_recall}};
}

inline std::string curve_to_csv(const PrCurve& c) {
  std::string out = "recall,precision,threshold\n";
  for (const auto& p : c.points) {
    out += format_double(p.recall) + "," + format_double(p.precision) + "," + format_double(p.threshold) + "\n";
  }
  return out;
}

inline json metrics_to_json(const std::map<std::string, PrCurve>& curves, std::span<const Detection> dets,
                            const std::string& split, const ProposalStats& stats, double iou_threshold) {
  json j = header(schema::kMetrics);
  j["split"] = split;
  j["iou_threshold"] = iou_threshold;
  json classes = json::object();
  for (const auto& [cls, c] : curves) {
    std::size_t n = 0;
    for (const auto& d : dets) n += d.class_name == cls ? 1 : 0;
    classes[cls] = {{"ap", c.ap ? json(*c.ap) : json(nullptr)},
                    {"num_gt", c.num_gt},
                    {"num_detections", n},
                    {"curve_csv", cls + ".csv"}};
  }
  j["classes"] = std::move(classes);
  const MeanAp m = mean_ap(curves);
  j["map"] = m.value;
  j["undefined_classes"] = m.undefined;
  j["proposal_stats"] = proposal_stats_to_json(stats);
  return j;
}

}  // namespace posedet
