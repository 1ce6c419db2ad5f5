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

// posedet command-line tool. Every verb reads its inputs, runs one pipeline
// stage and writes its outputs atomically. Failures print one JSON object
// on stderr and exit with 2 (bad input), 3 (numerical) or 4 (format).

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "posedet.hpp"

namespace {

using namespace posedet;

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::string ablation;
};

PipelineConfig load_config(const Globals& g) {
  PipelineConfig cfg;
  if (!g.config.empty()) cfg = config_from_json(read_json(g.config));
  if (g.seed) cfg.seed = *g.seed;
  if (g.workers) cfg.workers = *g.workers;
  if (!g.ablation.empty()) cfg.detect.ablation = parse_ablation(g.ablation);
  validate(cfg);
  return cfg;
}

void print_counts(const PatchLabelSet& set, std::span<const std::string> classes) {
  const auto counts = set.counts();
  std::size_t total = 0;
  std::printf("%-16s %8s\n", "class", "patches");
  for (const auto& cls : classes) {
    const auto it = counts.find(cls);
    const std::size_t n = it == counts.end() ? 0 : it->second;
    total += n;
    std::printf("%-16s %8zu\n", cls.c_str(), n);
  }
  const auto bg = counts.find(std::string(kBackground));
  const std::size_t nbg = bg == counts.end() ? 0 : bg->second;
  std::printf("%-16s %8zu\n", "background", nbg);
  std::printf("%-16s %8zu\n", "total", total + nbg);
  std::printf("%-16s %8zu\n", "discarded", set.discarded);
}

void print_metrics(const std::map<std::string, PrCurve>& curves, double map) {
  for (const auto& [cls, c] : curves) {
    if (c.ap) {
      std::printf("%-16s %7.2f\n", cls.c_str(), 100.0 * *c.ap);
    } else {
      std::printf("%-16s %7s\n", cls.c_str(), "n/a");
    }
  }
  std::printf("%-16s %7.2f\n", "mAP", 100.0 * map);
}

void print_warnings(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
}

int fail(ErrorKind kind, const std::string& message) {
  const json err{{"error", std::string(kind_name(kind))}, {"message", message}, {"exit_code", exit_code(kind)}};
  std::cerr << err.dump() << "\n";
  return exit_code(kind);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pose-conditioned object detection with geometric priors"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "pipeline config JSON");
  app.add_option("--seed", g.seed, "random seed (overrides the config)");
  app.add_option("--workers", g.workers, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--ablation", g.ablation, "score terms to use")
      ->check(CLI::IsMember({"full", "no-geometric", "no-appearance"}));

  std::string manifest_path, out, patches_path, features_path, priors_path, appearance_path, detections_path;
  std::string split;
  double iou_threshold = 0.5;

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  synth->add_option("--out", out, "output directory")->required();

  auto* synth_features = app.add_subcommand("synth-features", "patch features for a synthetic dataset");
  synth_features->add_option("--manifest", manifest_path)->required();
  synth_features->add_option("--patches", patches_path)->required();
  synth_features->add_option("--out", out, "feature matrix path")->required();

  auto* fit = app.add_subcommand("fit-priors", "learn per-class geometric priors");
  fit->add_option("--manifest", manifest_path)->required();
  fit->add_option("--out", out)->required();
  fit->add_option("--split", split, "image split (default train)");

  auto* patches = app.add_subcommand("make-patches", "label training patches and emit crop rectangles");
  patches->add_option("--manifest", manifest_path)->required();
  patches->add_option("--out", out)->required();
  patches->add_option("--split", split, "image split (default train)");

  std::string val_split = "val";
  auto* train = app.add_subcommand("train-appearance", "train and calibrate per-class linear SVMs");
  train->add_option("--manifest", manifest_path)->required();
  train->add_option("--patches", patches_path)->required();
  train->add_option("--features", features_path, "patch feature matrix")->required();
  train->add_option("--priors", priors_path, "prior model used during calibration")->required();
  train->add_option("--val-split", val_split)->default_val("val");
  train->add_option("--out", out)->required();

  auto* detect = app.add_subcommand("detect", "score, suppress and write detections");
  detect->add_option("--manifest", manifest_path)->required();
  detect->add_option("--priors", priors_path);
  detect->add_option("--appearance", appearance_path);
  detect->add_option("--split", split, "image split (default test)");
  detect->add_option("--out", out)->required();

  auto* evaluate = app.add_subcommand("evaluate", "per-class AP, mAP and PR curves");
  evaluate->add_option("--manifest", manifest_path)->required();
  evaluate->add_option("--detections", detections_path)->required();
  evaluate->add_option("--split", split, "image split (default test)");
  evaluate->add_option("--iou", iou_threshold)->default_val(0.5)->check(CLI::Range(0.0, 1.0));
  evaluate->add_option("--out", out, "output directory")->required();

  auto* stats = app.add_subcommand("proposal-stats", "proposal precision and per-class recall");
  stats->add_option("--manifest", manifest_path)->required();
  stats->add_option("--split", split, "image split (default test)");
  stats->add_option("--iou", iou_threshold)->default_val(0.5)->check(CLI::Range(0.0, 1.0));
  stats->add_option("--out", out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  if (split.empty()) split = (*fit || *patches) ? "train" : "test";

  try {
    const PipelineConfig cfg = load_config(g);
    const fs::path out_path = out;

    if (*synth) {
      const SynthDataset ds = synth_dataset(cfg.synth, cfg.seed);
      const Manifest m = write_synth(ds, out_path);
      std::printf("wrote %zu images to %s\n", m.images.size(), out_path.string().c_str());
      return 0;
    }

    const Manifest manifest = load_manifest(manifest_path);

    if (*synth_features) {
      const SynthDataset params = synth_params_from_json(read_json(manifest.base_dir / "synth.json"));
      const PatchLabelSet set = patches_from_json(read_json(patches_path), patches_path);
      std::set<std::string> needed;
      for (const auto& p : set.patches) needed.insert(p.image_id);
      Manifest subset = manifest;
      std::erase_if(subset.images, [&](const ManifestImage& img) { return !needed.contains(img.id); });
      const auto scenes = load_scenes(subset, "", {.proposals = true, .features = true}, cfg.workers);
      const IndexedFeatures feats = synth_patch_features(set, scenes, params);
      write_features(out_path, feats.matrix, feats.rows);
      std::printf("wrote %zu patch feature rows\n", feats.matrix.rows());
      return 0;
    }

    if (*fit) {
      const auto scenes = load_scenes(manifest, split, {.pose = true, .ground_truth = true}, cfg.workers);
      const PriorFitResult result = fit_priors(scenes, manifest.classes, cfg);
      print_warnings(result.warnings);
      write_json(out_path, priors_to_json(result, cfg));
      for (const auto& [cls, m] : result.models) {
        std::printf("%-16s", cls.c_str());
        for (const auto& j : m.joints) {
          std::printf(" %s(m=%zu)", std::string(joint_name(j.joint_id)).c_str(), j.gmm.size());
        }
        std::printf("\n");
      }
      return 0;
    }

    if (*patches) {
      const auto scenes = load_scenes(manifest, split, {.ground_truth = true, .proposals = true}, cfg.workers);
      const PatchLabelSet set = make_patches(scenes, cfg);
      write_json(out_path, patches_to_json(set));
      print_counts(set, manifest.classes);
      return 0;
    }

    if (*train) {
      const PatchLabelSet set = patches_from_json(read_json(patches_path), patches_path);
      const IndexedFeatures feats = read_features(features_path);
      const PriorDocument priors = priors_from_json(read_json(priors_path), priors_path);
      const auto val = load_scenes(manifest, val_split,
                                   {.pose = true, .ground_truth = true, .proposals = true, .features = true},
                                   cfg.workers);
      const AppearanceDocument doc = train_appearance(set, feats, manifest.classes, val, priors.models, cfg);
      print_warnings(doc.warnings);
      write_json(out_path, appearance_to_json(doc));
      for (const auto& [cls, m] : doc.models) {
        const auto ap = doc.validation_ap.at(cls);
        std::printf("%-16s c=%-6g lambda=%-8g val_ap=%s\n", cls.c_str(), m.c, m.lambda,
                    ap ? format_double(*ap).c_str() : "n/a");
      }
      return 0;
    }

    if (*detect) {
      const Ablation ablation = cfg.detect.ablation;
      std::optional<PriorDocument> priors;
      std::optional<AppearanceDocument> appearance;
      if (uses_geometry(ablation)) {
        if (priors_path.empty()) throw Error(ErrorKind::InvalidArgument, "--priors is required for this ablation");
        priors = priors_from_json(read_json(priors_path), priors_path);
      }
      if (uses_appearance(ablation)) {
        if (appearance_path.empty()) {
          throw Error(ErrorKind::InvalidArgument, "--appearance is required for this ablation");
        }
        appearance = appearance_from_json(read_json(appearance_path), appearance_path);
      }
      const LoadOptions what{.pose = uses_geometry(ablation),
                             .proposals = true,
                             .features = uses_appearance(ablation)};
      const auto scenes = load_scenes(manifest, split, what, cfg.workers);
      ModelSet models = make_model_set(manifest.classes, priors ? &priors->models : nullptr,
                                       appearance ? &*appearance : nullptr);
      std::vector<std::string> warnings;
      models.classes = detectable_classes(models, ablation, &warnings);
      print_warnings(warnings);
      std::vector<Detection> dets;
      if (!scenes.empty()) dets = run_detection(scenes, models, cfg.detect, cfg.workers);
      write_atomic(out_path, detections_to_jsonl(dets, ablation));
      std::printf("wrote %zu detections for %zu images\n", dets.size(), scenes.size());
      return 0;
    }

    if (*evaluate) {
      const auto dets = read_detections(detections_path);
      const auto scenes = load_scenes(manifest, split, {.ground_truth = true, .proposals = true}, cfg.workers);
      const auto images = eval_images(scenes);
      const auto curves = evaluate_detections(dets, images, manifest.classes, iou_threshold);
      const ProposalStats pstats = proposal_stats(images, iou_threshold);
      const json metrics = metrics_to_json(curves, dets, split, pstats, iou_threshold);
      for (const auto& [cls, c] : curves) write_atomic(out_path / (cls + ".csv"), curve_to_csv(c));
      write_json(out_path / "metrics.json", metrics);
      print_metrics(curves, metrics.at("map").get<double>());
      return 0;
    }

    if (*stats) {
      const auto scenes = load_scenes(manifest, split, {.ground_truth = true, .proposals = true}, cfg.workers);
      const ProposalStats st = proposal_stats(eval_images(scenes), iou_threshold);
      json j = header(schema::kProposalStats);
      j["split"] = split;
      j["iou_threshold"] = iou_threshold;
      j["stats"] = proposal_stats_to_json(st);
      write_json(out_path, j);
      std::printf("precision %.2f%%  mean recall %.2f%%  proposals/image %.1f\n", 100.0 * st.precision,
                  100.0 * st.mean_recall, st.mean_proposals_per_image);
      return 0;
    }
  } catch (const Error& e) {
    return fail(e.kind(), e.what());
  } catch (const json::exception& e) {
    return fail(ErrorKind::FormatError, e.what());
  } catch (const fs::filesystem_error& e) {
    return fail(ErrorKind::MissingFile, e.what());
  }
  return 0;
}
