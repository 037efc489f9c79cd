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

#include "ncav/surrogate.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "ncav/error.hpp"

namespace ncav::surrogate {
namespace {

using Int128 = __int128;

// sum(c_k^2) / n for the left and right partitions as an exact fraction
// num/den. Larger is better: weighted Gini = 1 - (left + right) / n_node.
struct SplitScore {
  Int128 num = 0;
  Int128 den = 1;

  bool BetterThan(const SplitScore& o) const { return num * o.den > o.num * den; }
};

SplitScore ScoreSplit(std::uint64_t sq_left, std::uint64_t n_left,
                      std::uint64_t sq_right, std::uint64_t n_right) {
  return {static_cast<Int128>(sq_left) * n_right +
              static_cast<Int128>(sq_right) * n_left,
          static_cast<Int128>(n_left) * n_right};
}

std::uint64_t SumSquares(const std::vector<std::uint64_t>& counts) {
  std::uint64_t total = 0;
  for (std::uint64_t c : counts) total += c * c;
  return total;
}

double Gini(const std::vector<std::uint64_t>& counts, std::uint64_t n) {
  if (n == 0) return 0.0;
  double sum = 0.0;
  for (std::uint64_t c : counts) {
    const double p = static_cast<double>(c) / static_cast<double>(n);
    sum += p * p;
  }
  return 1.0 - sum;
}

struct Candidate {
  bool found = false;
  std::uint32_t feature = 0;
  double threshold = 0.0;
  SplitScore score;
};

class Builder {
 public:
  Builder(const TrainingSet& data, const TreeHyperparams& hp,
          SurrogateTree& tree)
      : x_(data.features.scores), hp_(hp), tree_(tree) {
    tree_.classes = data.targets;
    std::sort(tree_.classes.begin(), tree_.classes.end());
    tree_.classes.erase(std::unique(tree_.classes.begin(), tree_.classes.end()),
                        tree_.classes.end());
    label_index_.reserve(data.targets.size());
    for (ClassId y : data.targets) {
      label_index_.push_back(static_cast<std::size_t>(
          std::lower_bound(tree_.classes.begin(), tree_.classes.end(), y) -
          tree_.classes.begin()));
    }
  }

  std::uint32_t Build(std::vector<std::size_t> samples, int depth) {
    const auto id = static_cast<std::uint32_t>(tree_.nodes.size());
    tree_.nodes.emplace_back();
    {
      TreeNode& node = tree_.nodes.back();
      node.node_id = id;
      node.sample_count = samples.size();
      node.class_counts.assign(tree_.classes.size(), 0);
      for (std::size_t s : samples) ++node.class_counts[label_index_[s]];
      node.impurity = Gini(node.class_counts, node.sample_count);
      const auto best = std::max_element(node.class_counts.begin(),
                                         node.class_counts.end());
      node.predicted_class =
          tree_.classes[static_cast<std::size_t>(best - node.class_counts.begin())];
      tree_.depth = std::max(tree_.depth, static_cast<std::uint32_t>(depth));
    }
    const TreeNode& node = tree_.nodes[id];
    const bool pure =
        std::count_if(node.class_counts.begin(), node.class_counts.end(),
                      [](std::uint64_t c) { return c > 0; }) <= 1;
    if (depth >= hp_.max_depth || pure ||
        samples.size() < static_cast<std::size_t>(hp_.min_samples_split)) {
      return id;
    }
    const Candidate split = FindSplit(samples);
    if (!split.found) return id;

    std::vector<std::size_t> left;
    std::vector<std::size_t> right;
    for (std::size_t s : samples) {
      (x_(static_cast<Eigen::Index>(s), split.feature) <= split.threshold
           ? left
           : right)
          .push_back(s);
    }
    samples.clear();
    samples.shrink_to_fit();
    tree_.nodes[id].kind = NodeKind::kInternal;
    tree_.nodes[id].concept_id = split.feature;
    tree_.nodes[id].threshold = split.threshold;
    const std::uint32_t left_id = Build(std::move(left), depth + 1);
    const std::uint32_t right_id = Build(std::move(right), depth + 1);
    tree_.nodes[id].left_child = left_id;
    tree_.nodes[id].right_child = right_id;
    return id;
  }

 private:
  Candidate FindSplit(const std::vector<std::size_t>& samples) const {
    Candidate best;
    const std::size_t n = samples.size();
    const auto min_leaf = static_cast<std::size_t>(hp_.min_samples_leaf);
    std::vector<std::uint64_t> total(tree_.classes.size(), 0);
    for (std::size_t s : samples) ++total[label_index_[s]];

    std::vector<std::size_t> order = samples;
    std::vector<std::uint64_t> left(tree_.classes.size());
    std::vector<std::uint64_t> right(tree_.classes.size());
    for (Eigen::Index f = 0; f < x_.cols(); ++f) {
      const auto value = [&](std::size_t s) {
        return x_(static_cast<Eigen::Index>(s), f);
      };
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return value(a) < value(b) || (value(a) == value(b) && a < b);
      });
      std::fill(left.begin(), left.end(), 0);
      right = total;
      std::uint64_t sq_left = 0;
      std::uint64_t sq_right = SumSquares(total);
      for (std::size_t p = 0; p + 1 < n; ++p) {
        const std::size_t k = label_index_[order[p]];
        // Incremental update of sum of squares: (c+1)^2 - c^2 = 2c + 1.
        sq_left += 2 * left[k] + 1;
        sq_right -= 2 * right[k] - 1;
        ++left[k];
        --right[k];
        const double lo = value(order[p]);
        const double hi = value(order[p + 1]);
        if (!(lo < hi)) continue;
        const std::size_t n_left = p + 1;
        const std::size_t n_right = n - n_left;
        if (n_left < min_leaf || n_right < min_leaf) continue;
        const SplitScore score = ScoreSplit(sq_left, n_left, sq_right, n_right);
        if (!best.found || score.BetterThan(best.score)) {
          double threshold = (lo + hi) / 2.0;
          if (!(threshold < hi)) threshold = lo;
          best = {true, static_cast<std::uint32_t>(f), threshold, score};
        }
      }
    }
    return best;
  }

  const Matrix& x_;
  const TreeHyperparams& hp_;
  SurrogateTree& tree_;
  std::vector<std::size_t> label_index_;
};

void ValidateHyperparams(const TreeHyperparams& hp) {
  if (hp.max_depth < 1 || hp.min_samples_leaf < 1 || hp.min_samples_split < 2) {
    Fail(ErrorCode::kInvalidArgument,
         "tree hyperparameters need max_depth >= 1, min_samples_leaf >= 1, "
         "min_samples_split >= 2");
  }
}

void CheckRow(const SurrogateTree& tree, std::size_t length) {
  if (length != tree.feature_count) {
    Fail(ErrorCode::kFeatureCountMismatch,
         "row has " + std::to_string(length) + " concepts, tree expects " +
             std::to_string(tree.feature_count));
  }
}

double Accuracy(const LabelVector& truth, const LabelVector& preds) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += truth[i] == preds[i];
  return truth.empty() ? 0.0
                       : static_cast<double>(hits) /
                             static_cast<double>(truth.size());
}

}  // namespace

std::map<ClassId, std::uint64_t> SurrogateTree::ClassCounts(
    const TreeNode& node) const {
  std::map<ClassId, std::uint64_t> out;
  for (std::size_t k = 0; k < classes.size(); ++k) {
    out[classes[k]] = node.class_counts.at(k);
  }
  return out;
}

SurrogateTree FitTree(const TrainingSet& data, const TreeHyperparams& hp) {
  ValidateHyperparams(hp);
  if (data.targets.empty()) {
    Fail(ErrorCode::kEmptyTrainingSet, "no training samples");
  }
  if (data.features.size() != data.targets.size()) {
    Fail(ErrorCode::kLengthMismatch,
         std::to_string(data.features.size()) + " feature rows for " +
             std::to_string(data.targets.size()) + " targets");
  }
  if (!data.features.scores.allFinite()) {
    Fail(ErrorCode::kNonFinite, "concept scores contain non-finite values");
  }
  SurrogateTree tree;
  tree.hyperparams = hp;
  tree.feature_count = static_cast<std::uint32_t>(data.features.concepts());
  Builder builder(data, hp, tree);
  std::vector<std::size_t> all(data.targets.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  tree.root_id = builder.Build(std::move(all), 0);
  return tree;
}

ClassId PredictRow(const SurrogateTree& tree, std::span<const double> row) {
  CheckRow(tree, row.size());
  const TreeNode* node = &tree.node(tree.root_id);
  while (!node->is_leaf()) {
    node = &tree.node(row[node->concept_id] <= node->threshold
                          ? node->left_child
                          : node->right_child);
  }
  return node->predicted_class;
}

LabelVector Predict(const SurrogateTree& tree,
                    const scorer::ConceptScoreMatrix& scores) {
  CheckRow(tree, scores.concepts());
  LabelVector out;
  out.reserve(scores.size());
  std::vector<double> row(scores.concepts());
  for (Eigen::Index i = 0; i < scores.scores.rows(); ++i) {
    Eigen::Map<Eigen::RowVectorXd>(row.data(), scores.scores.cols()) =
        scores.scores.row(i);
    out.push_back(PredictRow(tree, row));
  }
  return out;
}

std::vector<PathStep> DecisionPath(const SurrogateTree& tree,
                                   std::span<const double> row) {
  CheckRow(tree, row.size());
  std::vector<PathStep> path;
  const TreeNode* node = &tree.node(tree.root_id);
  while (!node->is_leaf()) {
    const bool similar = row[node->concept_id] > node->threshold;
    path.push_back(
        {node->node_id, similar ? Branch::kSimilar : Branch::kNotSimilar});
    node = &tree.node(similar ? node->right_child : node->left_child);
  }
  path.push_back({node->node_id, std::nullopt});
  return path;
}

GridSearchResult GridSearch(const TrainingSet& data, const HyperparamGrid& grid,
                            const TrainingSet& validation) {
  if (grid.max_depth.empty() || grid.min_samples_leaf.empty() ||
      grid.min_samples_split.empty() || grid.random_state.empty()) {
    Fail(ErrorCode::kInvalidArgument, "hyperparameter grid has an empty axis");
  }
  if (validation.features.size() != validation.targets.size()) {
    Fail(ErrorCode::kLengthMismatch, "validation features and targets differ");
  }
  if (validation.targets.empty()) {
    Fail(ErrorCode::kEmptyInput, "validation set is empty");
  }
  std::optional<GridSearchResult> best;
  for (int depth : grid.max_depth) {
    for (int leaf : grid.min_samples_leaf) {
      for (int split : grid.min_samples_split) {
        for (std::int64_t state : grid.random_state) {
          const TreeHyperparams hp{depth, leaf, split, state};
          SurrogateTree tree = FitTree(data, hp);
          const double acc =
              Accuracy(validation.targets, Predict(tree, validation.features));
          const bool better =
              !best || acc > best->validation_accuracy ||
              (acc == best->validation_accuracy &&
               (depth < best->best.max_depth ||
                (depth == best->best.max_depth &&
                 leaf > best->best.min_samples_leaf)));
          if (better) best = GridSearchResult{hp, std::move(tree), acc};
        }
      }
    }
  }
  return std::move(*best);
}

}  // namespace ncav::surrogate
