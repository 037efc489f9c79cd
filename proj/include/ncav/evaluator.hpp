/*
 * Copyright 2026 The ncav Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Fidelity and classification metrics, class-group sampling and the
// concept-count / class-count / depth sweeps.

#ifndef NCAV_EVALUATOR_HPP_
#define NCAV_EVALUATOR_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ncav/datastore.hpp"
#include "ncav/reducer.hpp"
#include "ncav/surrogate.hpp"

namespace ncav::evaluator {

using surrogate::TargetKind;

// Fraction of positions where the surrogate agrees with the model.
double Fidelity(const LabelVector& model_preds,
                const LabelVector& surrogate_preds);
double Accuracy(const LabelVector& truth, const LabelVector& preds);
// Unweighted mean of per-class F1 over class_ids; 0/0 counts as F1 = 0.
double F1Macro(const LabelVector& truth, const LabelVector& preds,
               std::span<const ClassId> class_ids);

// n_groups sets of k distinct ids (sorted), each drawn uniformly without
// replacement from a single seeded stream.
std::vector<std::vector<ClassId>> SampleClassGroups(
    std::span<const ClassId> all_class_ids, std::size_t k,
    std::size_t n_groups, std::uint64_t seed);

// Same stream as SampleClassGroups, skipping groups rejected by `accept`.
std::vector<std::vector<ClassId>> SampleEligibleGroups(
    std::span<const ClassId> all_class_ids, std::size_t k,
    std::size_t n_groups, std::uint64_t seed,
    const std::function<bool(const std::vector<ClassId>&)>& accept);

struct SweepConfig {
  std::vector<std::size_t> c_values{15};
  std::vector<std::size_t> k_values{10};
  std::vector<int> depth_values{10};
  std::size_t n_class_groups = 10;
  std::uint64_t group_seed = 0;
  TargetKind target_kind = TargetKind::kModelPredictions;
  // Worker threads for independent (c, k, group) cells.
  std::size_t threads = 1;
};

struct GroupResult {
  std::size_t group_index = 0;
  std::vector<ClassId> class_ids;
  double accuracy = 0.0;        // test split, against the target labels
  double f1_macro = 0.0;        // test split
  double train_accuracy = 0.0;  // training split, against the target labels
  std::size_t train_count = 0;
  std::size_t test_count = 0;

  bool operator==(const GroupResult&) const = default;
};

struct MetricReport {
  std::size_t c = 0;
  std::size_t k = 0;
  int depth = 0;
  TargetKind target_kind = TargetKind::kModelPredictions;
  double accuracy = 0.0;  // mean over groups
  double f1_macro = 0.0;  // mean over groups
  double train_accuracy = 0.0;
  std::vector<GroupResult> per_group;
  std::vector<double> per_group_values;  // per-group accuracy
  double mean = 0.0;                     // == accuracy
  std::size_t group_count = 0;

  bool operator==(const MetricReport&) const = default;
};

// Fits reducer -> pooling -> tree on `train` and scores `test`, both already
// restricted to the classes of interest.
struct CellResult {
  GroupResult metrics;
  surrogate::SurrogateTree tree;
};

CellResult EvaluateWithReducer(const datastore::LoadedDataset& train,
                               const datastore::LoadedDataset& test,
                               const reducer::ReducerModel& model,
                               TargetKind target,
                               const surrogate::TreeHyperparams& hp,
                               std::span<const ClassId> class_ids,
                               const reducer::InferenceOptions& inference = {});

// Images whose ground-truth class is in `classes`, in original order.
datastore::LoadedDataset SubsetByClass(const datastore::LoadedDataset& data,
                                       std::span<const ClassId> classes);

// Reports in (c, k, depth) order, groups in sampling order.
std::vector<MetricReport> RunSweep(const datastore::LoadedDataset& train,
                                   const datastore::LoadedDataset& test,
                                   std::span<const ClassId> all_class_ids,
                                   const SweepConfig& cfg,
                                   const reducer::NmfOptions& reducer_opts,
                                   const surrogate::TreeHyperparams& tree_base);

std::vector<MetricReport> RunSweep(const datastore::DatasetManifest& train,
                                   const datastore::DatasetManifest& test,
                                   const SweepConfig& cfg,
                                   const reducer::NmfOptions& reducer_opts,
                                   const surrogate::TreeHyperparams& tree_base);

struct DepthSweepOptions {
  std::vector<int> depths{2, 4, 6, 8, 10, 12, 14, 16, 18, 20, 22, 24};
  std::size_t c = 15;
  std::size_t k = 10;
  std::size_t n_groups = 10;
  std::uint64_t seed = 0;
  TargetKind target_kind = TargetKind::kGroundTruth;
  std::size_t threads = 1;
};

std::vector<MetricReport> RunDepthSweep(
    const datastore::LoadedDataset& train, const datastore::LoadedDataset& test,
    std::span<const ClassId> all_class_ids, const DepthSweepOptions& options,
    const reducer::NmfOptions& reducer_opts = {},
    const surrogate::TreeHyperparams& tree_base = {});

std::string TargetKindName(TargetKind kind);  // "model" / "truth"

// JSON lines: one line per (report, group) and a trailing summary line.
std::string FormatReportJsonl(const std::vector<MetricReport>& reports);
void WriteReport(const std::vector<MetricReport>& reports,
                 const std::filesystem::path& path);

}  // namespace ncav::evaluator

#endif  // NCAV_EVALUATOR_HPP_
