# Copyright 2026 The ncav Authors.
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     https://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

import json
import os
import subprocess

import numpy as np
import pytest

import ncav


def make_features(n=60, seed=0):
    # Two blocks of channels; the label is which block is switched on.
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 2, size=n)
    x = rng.uniform(0.0, 0.05, size=(n, 4, 4, 8)).astype(np.float32)
    for i, y in enumerate(labels):
        x[i, :, :, 4 * y:4 * y + 4] += rng.uniform(0.5, 1.0, size=(4, 4, 4))
    return x, (labels * 10 + 3).astype(np.int64)


def write_dataset(dir_path, x, y):
    np.save(dir_path / "features.npy", x)
    np.save(dir_path / "truth.npy", y)
    np.save(dir_path / "preds.npy", y)
    manifest = {
        "dataset_name": "toy",
        "classes": [{"id": 3, "name": "gull"}, {"id": 13, "name": "sparrow"}],
        "feature_maps_path": "features.npy",
        "ground_truth_path": "truth.npy",
        "model_predictions_path": "preds.npy",
        "image_paths": None,
        "model_name": "toy",
        "layer_name": "block5",
    }
    path = dir_path / "manifest.json"
    path.write_text(json.dumps(manifest))
    return path


def test_fit_transform_pipeline():
    x, y = make_features()
    fit = ncav.fit_reducer(x, rank=2, seed=0)
    assert fit.model.dictionary.shape == (2, 8)
    assert fit.model.dictionary.dtype == np.float32
    assert fit.scores.min() >= 0.0
    hist = fit.objective_history
    assert all(b <= a + 1e-9 * hist[0] for a, b in zip(hist, hist[1:]))

    maps = ncav.transform(x, fit.model)
    assert maps.shape == (60, 4, 4, 2)
    scores = ncav.gap(maps)
    np.testing.assert_allclose(scores, maps.mean(axis=(1, 2)), rtol=1e-12)

    tree = ncav.fit_tree(scores, y, max_depth=2)
    preds = tree.predict(scores)
    assert ncav.fidelity(list(y), preds) == 1.0
    assert tree.nodes[0].node_id == 0
    assert tree.classes == [3, 13]

    back = ncav.inverse_transform(maps, fit.model)
    assert back.shape == x.shape


def test_metrics():
    assert ncav.fidelity([0, 1, 1, 0], [0, 1, 0, 0]) == 0.75
    assert ncav.f1_macro([0, 0, 1, 1], [0, 0, 0, 0], [0, 1]) == pytest.approx(1 / 3, abs=1e-12)
    groups = ncav.sample_class_groups([1, 2, 3, 4, 5], 2, 3, seed=7)
    assert len(groups) == 3 and all(len(g) == 2 and g == sorted(g) for g in groups)


def test_scorer():
    maps = np.array([0, 1, 0.4, 0.6], dtype=np.float64).reshape(1, 2, 2, 1)
    assert ncav.concept_heatmap(maps, 0, 0).tolist() == [[False, True], [False, True]]
    flat = np.full((1, 2, 2, 1), 3.0)
    assert not ncav.concept_heatmap(flat, 0, 0).any()
    scores = np.array([[0.1], [0.9], [0.5], [0.9], [0.2], [0.3]])
    ids = [i for i, _ in ncav.select_prototypes(scores, 0)]
    assert ids == [1, 3, 2, 5, 4]


def test_errors_carry_codes():
    with pytest.raises(ncav.NcavError) as info:
        ncav.fit_reducer(np.zeros((2, 2, 2, 3), dtype=np.float32), rank=2)
    assert info.value.code == "ZeroMatrix"
    with pytest.raises(ncav.NcavError) as info:
        ncav.fit_reducer(-np.ones((2, 2, 2, 3), dtype=np.float32), rank=2)
    assert info.value.code == "NegativeActivation"


def test_explanations_and_persistence(tmp_path):
    x, y = make_features()
    fit = ncav.fit_reducer(x, rank=2, seed=1)
    scores = ncav.gap(ncav.transform(x, fit.model))
    tree = ncav.fit_tree(scores, y, max_depth=2)
    glob = ncav.explain_global(tree, scores, class_names={3: "gull", 13: "sparrow"})
    dot = glob.to_dot()
    assert dot.startswith("digraph") and "gull" in dot
    assert ncav.GlobalExplanation.from_json(glob.to_json()).to_json() == glob.to_json()
    local = ncav.explain_local(glob, list(scores[0]), 0)
    assert local.path[0] == 0
    assert local.predicted_class == tree.predict(scores[:1])[0]

    fit.model.save(tmp_path / "r.ncav")
    assert ncav.ReducerModel.load(tmp_path / "r.ncav") == fit.model
    assert ncav.ReducerModel.from_bytes(fit.model.to_bytes()).to_bytes() == fit.model.to_bytes()
    tree.save(str(tmp_path / "t.bin"))
    assert ncav.SurrogateTree.load(str(tmp_path / "t.bin")) == tree


def test_dataset_files_and_sweep(tmp_path):
    x, y = make_features()
    manifest = write_dataset(tmp_path, x, y)
    data = ncav.load_dataset(manifest)
    np.testing.assert_array_equal(data["features"], np.load(tmp_path / "features.npy"))
    assert data["class_names"] == {3: "gull", 13: "sparrow"}
    reports, summary = ncav.run_sweep(manifest, manifest, c_values=[2], k_values=[2], depths=[2],
                             n_groups=1)
    assert len(reports) == 1
    assert reports[0]["c"] == 2 and reports[0]["depth"] == 2
    assert summary["mean_accuracy"] == reports[0]["accuracy"]

    model_path = tmp_path / "m.ncav"
    code, _, err = ncav.run_cli(["ncav", "fit-reducer", "--manifest", str(manifest),
                                 "--concepts", "2", "--out", str(model_path)])
    assert code == 0, err
    assert ncav.ReducerModel.load(model_path).rank == 2


@pytest.mark.skipif("NCAV_CLI" not in os.environ, reason="CLI binary not provided")
def test_cli_binary(tmp_path):
    x, y = make_features()
    manifest = write_dataset(tmp_path, x, y)
    out = subprocess.run([os.environ["NCAV_CLI"], "fit-reducer", "--manifest", str(manifest),
                          "--concepts", "2", "--out", str(tmp_path / "m.ncav")],
                         capture_output=True, text=True)
    assert out.returncode == 0, out.stderr
    bad = subprocess.run([os.environ["NCAV_CLI"], "fit-reducer", "--bogus"],
                         capture_output=True, text=True)
    assert bad.returncode == 1
