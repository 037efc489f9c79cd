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

"""Concept extraction from CNN feature maps and surrogate decision trees."""

import json

from ._core import (
    GlobalExplanation,
    LocalExplanation,
    NcavError,
    NmfFit,
    ReducerModel,
    SurrogateTree,
    TreeNode,
    accuracy,
    concept_heatmap,
    explain_global,
    explain_local,
    f1_macro,
    fidelity,
    fit_nmf,
    fit_reducer,
    fit_tree,
    gap,
    inverse_transform,
    load_dataset,
    residual,
    run_cli,
    sample_class_groups,
    select_prototypes,
    transform,
)
from . import _core

__version__ = "0.1.0"


def run_sweep(train_manifest, test_manifest, c_values=(15,), k_values=(10,),
              depths=(10,), n_groups=10, group_seed=0, target="model", seed=0,
              threads=1):
    """Runs the (c', k, depth) sweep.

    Returns (reports, summary): one dict per (c', k, depth) cell and the
    trailing summary record.
    """
    text = _core._run_sweep(str(train_manifest), str(test_manifest),
                            list(c_values), list(k_values), list(depths),
                            n_groups, group_seed, target, seed, threads)
    records = [json.loads(line) for line in text.splitlines() if line]
    summary = next((r for r in records if r.get("summary")), None)
    return [r for r in records if not r.get("summary")], summary


__all__ = [name for name in dir() if not name.startswith("_") and name != "json"]
