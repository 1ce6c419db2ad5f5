# Copyright 2026 The posedet Authors. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
# ==============================================================================
"""Runs the CLI on a small synthetic dataset and validates metrics.json."""

import csv
import json
import pathlib
import shutil
import subprocess
import sys

import jsonschema


def run(cli, *args):
    subprocess.run([cli, *args], check=True, stdout=subprocess.DEVNULL)


def main():
    cli, schema_path, work = sys.argv[1], pathlib.Path(sys.argv[2]), pathlib.Path(sys.argv[3])
    shutil.rmtree(work, ignore_errors=True)
    work.mkdir(parents=True)
    config = work / "config.json"
    config.write_text(json.dumps({"synth": {"train_scenes": 30, "test_scenes": 10, "num_classes": 3}}))
    g = ["--config", str(config), "--seed", "5"]
    manifest = ["--manifest", str(work / "data" / "manifest.json")]
    run(cli, "synth", *g, "--out", str(work / "data"))
    run(cli, "fit-priors", *g, *manifest, "--out", str(work / "priors.json"))
    run(cli, "make-patches", *g, *manifest, "--out", str(work / "patches.json"))
    run(cli, "synth-features", *g, *manifest, "--patches", str(work / "patches.json"),
        "--out", str(work / "pf.bin"))
    run(cli, "train-appearance", *g, *manifest, "--patches", str(work / "patches.json"),
        "--features", str(work / "pf.bin"), "--priors", str(work / "priors.json"),
        "--out", str(work / "appearance.json"))
    run(cli, "detect", *g, *manifest, "--priors", str(work / "priors.json"),
        "--appearance", str(work / "appearance.json"), "--out", str(work / "dets.jsonl"))
    run(cli, "evaluate", *g, *manifest, "--detections", str(work / "dets.jsonl"),
        "--out", str(work / "metrics"))

    metrics = json.loads((work / "metrics" / "metrics.json").read_text())
    jsonschema.validate(metrics, json.loads(schema_path.read_text()))
    for name, entry in metrics["classes"].items():
        with open(work / "metrics" / entry["curve_csv"], newline="") as f:
            rows = list(csv.reader(f))
        assert rows[0] == ["recall", "precision", "threshold"], name
        assert len(rows) - 1 == entry["num_detections"], name
    print("metrics.json valid:", ", ".join(sorted(metrics["classes"])))


if __name__ == "__main__":
    main()
