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

// CART classification tree over concept scores.
//
// Splits minimize the weighted Gini impurity of the children. Candidate
// thresholds are midpoints between consecutive distinct feature values at a
// node; samples with score <= threshold go left. Equal-impurity candidates
// resolve to the lowest concept index, then the lowest threshold, so fitting
// is fully deterministic. `random_state` is carried for format compatibility
// and does not influence the fit.

#ifndef NCAV_SURROGATE_HPP_
#define NCAV_SURROGATE_HPP_

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "ncav/scorer.hpp"
#include "ncav/types.hpp"

namespace ncav::surrogate {

enum class TargetKind : std::uint8_t { kModelPredictions = 0, kGroundTruth = 1 };

struct TrainingSet {
  scorer::ConceptScoreMatrix features;
  LabelVector targets;
  TargetKind target_kind = TargetKind::kModelPredictions;
};

struct TreeHyperparams {
  int max_depth = 10;
  int min_samples_leaf = 1;
  int min_samples_split = 2;
  std::int64_t random_state = 0;

  bool operator==(const TreeHyperparams&) const = default;
};

enum class NodeKind : std::uint8_t { kInternal = 0, kLeaf = 1 };

inline constexpr std::uint32_t kNoChild = 0xFFFFFFFFu;

struct TreeNode {
  std::uint32_t node_id = 0;
  NodeKind kind = NodeKind::kLeaf;
  std::uint32_t concept_id = 0;  // internal only
  double threshold = 0.0;        // internal only
  std::uint32_t left_child = kNoChild;
  std::uint32_t right_child = kNoChild;
  std::uint64_t sample_count = 0;
  // Aligned with SurrogateTree::classes.
  std::vector<std::uint64_t> class_counts;
  ClassId predicted_class = 0;
  double impurity = 0.0;

  bool is_leaf() const { return kind == NodeKind::kLeaf; }
  bool operator==(const TreeNode&) const = default;
};

struct SurrogateTree {
  std::vector<TreeNode> nodes;  // preorder; node_id == index
  std::uint32_t root_id = 0;
  TreeHyperparams hyperparams;
  std::uint32_t depth = 0;
  std::uint32_t feature_count = 0;
  std::vector<ClassId> classes;  // ascending

  const TreeNode& node(std::uint32_t id) const { return nodes.at(id); }
  std::map<ClassId, std::uint64_t> ClassCounts(const TreeNode& node) const;
  bool operator==(const SurrogateTree&) const = default;
};

SurrogateTree FitTree(const TrainingSet& data, const TreeHyperparams& hp = {});

ClassId PredictRow(const SurrogateTree& tree, std::span<const double> row);
LabelVector Predict(const SurrogateTree& tree,
                    const scorer::ConceptScoreMatrix& scores);

enum class Branch : std::uint8_t { kSimilar, kNotSimilar };

struct PathStep {
  std::uint32_t node_id = 0;
  std::optional<Branch> branch;  // empty on the terminal leaf
  bool operator==(const PathStep&) const = default;
};

// Root-to-leaf route; Similar means score > threshold (right branch).
std::vector<PathStep> DecisionPath(const SurrogateTree& tree,
                                   std::span<const double> row);

struct HyperparamGrid {
  std::vector<int> max_depth{10};
  std::vector<int> min_samples_leaf{1};
  std::vector<int> min_samples_split{2};
  std::vector<std::int64_t> random_state{0};
};

struct GridSearchResult {
  TreeHyperparams best;
  SurrogateTree tree;
  double validation_accuracy = 0.0;
};

// Exhaustive search scored by validation accuracy. Ties prefer the smaller
// max_depth, then the larger min_samples_leaf, then grid order.
GridSearchResult GridSearch(const TrainingSet& data, const HyperparamGrid& grid,
                            const TrainingSet& validation);

}  // namespace ncav::surrogate

#endif  // NCAV_SURROGATE_HPP_
