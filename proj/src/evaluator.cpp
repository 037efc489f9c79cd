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

#include "ncav/evaluator.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <random>
#include <set>
#include <thread>

#include "json.hpp"
#include "ncav/error.hpp"
#include "ncav/scorer.hpp"

namespace ncav::evaluator {
namespace {

using datastore::LoadedDataset;
using nlohmann::ordered_json;

void CheckPair(const LabelVector& a, const LabelVector& b) {
  if (a.size() != b.size()) {
    Fail(ErrorCode::kLengthMismatch, std::to_string(a.size()) + " vs " +
                                         std::to_string(b.size()) + " labels");
  }
  if (a.empty()) Fail(ErrorCode::kEmptyInput, "no labels to compare");
}

double Mean(const std::vector<double>& values) {
  if (values.empty()) return 0.0;
  double total = 0.0;
  for (double v : values) total += v;
  return total / static_cast<double>(values.size());
}

std::vector<ClassId> DrawGroup(std::span<const ClassId> pool, std::size_t k,
                               std::mt19937_64& rng) {
  std::vector<ClassId> ids(pool.begin(), pool.end());
  // Partial Fisher-Yates: the first k entries are a uniform k-subset.
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, ids.size() - 1);
    std::swap(ids[i], ids[pick(rng)]);
  }
  ids.resize(k);
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::vector<ClassId> SortedUnique(std::span<const ClassId> ids) {
  std::vector<ClassId> out(ids.begin(), ids.end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

const LabelVector& Targets(const LoadedDataset& data, TargetKind kind) {
  return kind == TargetKind::kModelPredictions ? data.predictions
                                               : data.ground_truth;
}

scorer::ConceptScoreMatrix PoolMatrix(const Matrix& s, const Shape4& cells,
                                      std::size_t rank,
                                      std::vector<ImageId> image_ids) {
  const Shape4 shape{cells.n, cells.h, cells.w, rank};
  std::vector<double> values(s.data(), s.data() + s.size());
  return scorer::Gap(SpatialConceptMap{Tensor4<double>(shape, std::move(values)),
                                       std::move(image_ids)});
}

CellResult EvaluateScores(const scorer::ConceptScoreMatrix& train_scores,
                          const scorer::ConceptScoreMatrix& test_scores,
                          const LoadedDataset& train, const LoadedDataset& test,
                          TargetKind target,
                          const surrogate::TreeHyperparams& hp,
                          std::span<const ClassId> class_ids) {
  const LabelVector& train_y = Targets(train, target);
  const LabelVector& test_y = Targets(test, target);
  surrogate::TrainingSet set{train_scores, train_y, target};
  CellResult out;
  out.tree = surrogate::FitTree(set, hp);
  const LabelVector train_pred = surrogate::Predict(out.tree, train_scores);
  const LabelVector test_pred = surrogate::Predict(out.tree, test_scores);

  std::vector<ClassId> f1_classes(class_ids.begin(), class_ids.end());
  f1_classes.insert(f1_classes.end(), train_y.begin(), train_y.end());
  f1_classes.insert(f1_classes.end(), test_y.begin(), test_y.end());
  f1_classes = SortedUnique(f1_classes);

  GroupResult& m = out.metrics;
  m.class_ids = SortedUnique(class_ids);
  m.accuracy = Accuracy(test_y, test_pred);
  m.f1_macro = F1Macro(test_y, test_pred, f1_classes);
  m.train_accuracy = Accuracy(train_y, train_pred);
  m.train_count = train_y.size();
  m.test_count = test_y.size();
  return out;
}

// Runs fn(0..count-1) on up to `threads` workers; rethrows the exception of
// the lowest failing index.
template <typename Fn>
void ParallelFor(std::size_t count, std::size_t threads, Fn fn) {
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t n_workers = std::clamp<std::size_t>(threads, 1, count);
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_workers; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  for (const std::exception_ptr& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

ordered_json GroupLine(const MetricReport& r, const GroupResult& g) {
  ordered_json line;
  line["c"] = r.c;
  line["k"] = r.k;
  line["depth"] = r.depth;
  line["target_kind"] = TargetKindName(r.target_kind);
  line["group_index"] = g.group_index;
  line["class_ids"] = g.class_ids;
  line["accuracy"] = g.accuracy;
  line["f1_macro"] = g.f1_macro;
  line["train_accuracy"] = g.train_accuracy;
  line["n_train"] = g.train_count;
  line["n_test"] = g.test_count;
  return line;
}

}  // namespace

double Fidelity(const LabelVector& model_preds,
                const LabelVector& surrogate_preds) {
  CheckPair(model_preds, surrogate_preds);
  std::size_t agree = 0;
  for (std::size_t i = 0; i < model_preds.size(); ++i) {
    agree += model_preds[i] == surrogate_preds[i];
  }
  return static_cast<double>(agree) / static_cast<double>(model_preds.size());
}

double Accuracy(const LabelVector& truth, const LabelVector& preds) {
  return Fidelity(truth, preds);
}

double F1Macro(const LabelVector& truth, const LabelVector& preds,
               std::span<const ClassId> class_ids) {
  CheckPair(truth, preds);
  if (class_ids.empty()) Fail(ErrorCode::kEmptyInput, "no classes for F1");
  double total = 0.0;
  for (ClassId c : class_ids) {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      const bool is_true = truth[i] == c;
      const bool is_pred = preds[i] == c;
      tp += is_true && is_pred;
      fp += !is_true && is_pred;
      fn += is_true && !is_pred;
    }
    // F1 = 2PR/(P+R) = 2TP/(2TP+FP+FN); zero when undefined.
    const std::size_t denom = 2 * tp + fp + fn;
    if (denom > 0 && tp > 0) {
      total += 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
    }
  }
  return total / static_cast<double>(class_ids.size());
}

std::vector<std::vector<ClassId>> SampleClassGroups(
    std::span<const ClassId> all_class_ids, std::size_t k,
    std::size_t n_groups, std::uint64_t seed) {
  return SampleEligibleGroups(all_class_ids, k, n_groups, seed,
                              [](const std::vector<ClassId>&) { return true; });
}

std::vector<std::vector<ClassId>> SampleEligibleGroups(
    std::span<const ClassId> all_class_ids, std::size_t k,
    std::size_t n_groups, std::uint64_t seed,
    const std::function<bool(const std::vector<ClassId>&)>& accept) {
  const std::vector<ClassId> pool = SortedUnique(all_class_ids);
  if (k > pool.size()) {
    Fail(ErrorCode::kKTooLarge, "k=" + std::to_string(k) + " exceeds " +
                                    std::to_string(pool.size()) + " classes");
  }
  if (k < 1) Fail(ErrorCode::kInvalidArgument, "k must be >= 1");
  std::mt19937_64 rng(seed);
  std::vector<std::vector<ClassId>> groups;
  const std::size_t max_draws = 1000 + 100 * n_groups;
  for (std::size_t draw = 0; groups.size() < n_groups; ++draw) {
    if (draw >= max_draws) {
      Fail(ErrorCode::kInvalidArgument,
           "could not sample " + std::to_string(n_groups) +
               " eligible class groups of size " + std::to_string(k));
    }
    std::vector<ClassId> group = DrawGroup(pool, k, rng);
    if (accept(group)) groups.push_back(std::move(group));
  }
  return groups;
}

datastore::LoadedDataset SubsetByClass(const datastore::LoadedDataset& data,
                                       std::span<const ClassId> classes) {
  const std::set<ClassId> keep(classes.begin(), classes.end());
  const Shape4& s = data.batch.tensor.shape();
  const std::size_t stride = s.h * s.w * s.c;
  const auto src = data.batch.tensor.data();
  LoadedDataset out;
  std::vector<float> values;
  for (std::size_t i = 0; i < s.n; ++i) {
    if (!keep.contains(data.ground_truth[i])) continue;
    values.insert(values.end(), src.begin() + static_cast<long>(i * stride),
                  src.begin() + static_cast<long>((i + 1) * stride));
    out.batch.image_ids.push_back(data.batch.image_ids[i]);
    out.ground_truth.push_back(data.ground_truth[i]);
    out.predictions.push_back(data.predictions[i]);
  }
  out.batch.tensor = Tensor4<float>(
      Shape4{out.ground_truth.size(), s.h, s.w, s.c}, std::move(values));
  return out;
}

CellResult EvaluateWithReducer(const datastore::LoadedDataset& train,
                               const datastore::LoadedDataset& test,
                               const reducer::ReducerModel& model,
                               TargetKind target,
                               const surrogate::TreeHyperparams& hp,
                               std::span<const ClassId> class_ids,
                               const reducer::InferenceOptions& inference) {
  if (train.ground_truth.empty() || test.ground_truth.empty()) {
    Fail(ErrorCode::kEmptyInput, "train and test splits must be non-empty");
  }
  const auto train_scores =
      scorer::Gap(reducer::Transform(train.batch, model, inference));
  const auto test_scores =
      scorer::Gap(reducer::Transform(test.batch, model, inference));
  return EvaluateScores(train_scores, test_scores, train, test, target, hp,
                        class_ids);
}

std::vector<MetricReport> RunSweep(const datastore::LoadedDataset& train,
                                   const datastore::LoadedDataset& test,
                                   std::span<const ClassId> all_class_ids,
                                   const SweepConfig& cfg,
                                   const reducer::NmfOptions& reducer_opts,
                                   const surrogate::TreeHyperparams& tree_base) {
  if (cfg.c_values.empty() || cfg.k_values.empty() || cfg.depth_values.empty() ||
      cfg.n_class_groups < 1) {
    Fail(ErrorCode::kInvalidArgument, "sweep needs non-empty c/k/depth lists");
  }
  for (std::size_t c : cfg.c_values) {
    if (c < 1) Fail(ErrorCode::kInvalidArgument, "c values must be >= 1");
  }
  for (int d : cfg.depth_values) {
    if (d < 1) Fail(ErrorCode::kInvalidArgument, "depth values must be >= 1");
  }
  const std::set<ClassId> in_train(train.ground_truth.begin(),
                                   train.ground_truth.end());
  const std::set<ClassId> in_test(test.ground_truth.begin(),
                                  test.ground_truth.end());
  // Groups need two trainable classes and at least one test image.
  const auto eligible = [&](const std::vector<ClassId>& group) {
    const auto n_train = std::count_if(group.begin(), group.end(), [&](ClassId c) {
      return in_train.contains(c);
    });
    const bool any_test = std::any_of(group.begin(), group.end(), [&](ClassId c) {
      return in_test.contains(c);
    });
    return n_train >= 2 && any_test;
  };
  std::vector<std::vector<std::vector<ClassId>>> groups_by_k;
  for (std::size_t k : cfg.k_values) {
    groups_by_k.push_back(SampleEligibleGroups(
        all_class_ids, k, cfg.n_class_groups, cfg.group_seed, eligible));
  }

  const std::size_t n_c = cfg.c_values.size();
  const std::size_t n_k = cfg.k_values.size();
  const std::size_t n_g = cfg.n_class_groups;
  const std::size_t n_d = cfg.depth_values.size();
  // results[((ci * n_k + ki) * n_g + g) * n_d + di]
  std::vector<GroupResult> results(n_c * n_k * n_g * n_d);
  ParallelFor(n_c * n_k * n_g, cfg.threads, [&](std::size_t cell) {
    const std::size_t ci = cell / (n_k * n_g);
    const std::size_t ki = (cell / n_g) % n_k;
    const std::size_t g = cell % n_g;
    const std::vector<ClassId>& group = groups_by_k[ki][g];
    const LoadedDataset sub_train = SubsetByClass(train, group);
    const LoadedDataset sub_test = SubsetByClass(test, group);

    reducer::NmfOptions opts = reducer_opts;
    opts.rank = cfg.c_values[ci];
    const reducer::NmfFit fit = reducer::FitReducer(sub_train.batch, opts);
    const auto train_scores =
        PoolMatrix(fit.scores, sub_train.batch.tensor.shape(), opts.rank,
                   sub_train.batch.image_ids);
    const auto test_scores = scorer::Gap(reducer::Transform(
        sub_test.batch, fit.model, {opts.max_iters, opts.rel_tol}));
    for (std::size_t di = 0; di < n_d; ++di) {
      surrogate::TreeHyperparams hp = tree_base;
      hp.max_depth = cfg.depth_values[di];
      GroupResult r = EvaluateScores(train_scores, test_scores, sub_train,
                                     sub_test, cfg.target_kind, hp, group)
                          .metrics;
      r.group_index = g;
      results[cell * n_d + di] = std::move(r);
    }
  });

  std::vector<MetricReport> reports;
  for (std::size_t ci = 0; ci < n_c; ++ci) {
    for (std::size_t ki = 0; ki < n_k; ++ki) {
      for (std::size_t di = 0; di < n_d; ++di) {
        MetricReport report;
        report.c = cfg.c_values[ci];
        report.k = cfg.k_values[ki];
        report.depth = cfg.depth_values[di];
        report.target_kind = cfg.target_kind;
        std::vector<double> f1;
        std::vector<double> train_acc;
        for (std::size_t g = 0; g < n_g; ++g) {
          const GroupResult& r = results[((ci * n_k + ki) * n_g + g) * n_d + di];
          report.per_group.push_back(r);
          report.per_group_values.push_back(r.accuracy);
          f1.push_back(r.f1_macro);
          train_acc.push_back(r.train_accuracy);
        }
        report.accuracy = Mean(report.per_group_values);
        report.mean = report.accuracy;
        report.f1_macro = Mean(f1);
        report.train_accuracy = Mean(train_acc);
        report.group_count = n_g;
        reports.push_back(std::move(report));
      }
    }
  }
  return reports;
}

std::vector<MetricReport> RunSweep(const datastore::DatasetManifest& train,
                                   const datastore::DatasetManifest& test,
                                   const SweepConfig& cfg,
                                   const reducer::NmfOptions& reducer_opts,
                                   const surrogate::TreeHyperparams& tree_base) {
  const LoadedDataset train_data = datastore::LoadFeatureMaps(train);
  const LoadedDataset test_data = datastore::LoadFeatureMaps(test);
  const std::vector<ClassId> ids = train.ClassIds();
  return RunSweep(train_data, test_data, ids, cfg, reducer_opts, tree_base);
}

std::vector<MetricReport> RunDepthSweep(
    const datastore::LoadedDataset& train, const datastore::LoadedDataset& test,
    std::span<const ClassId> all_class_ids, const DepthSweepOptions& options,
    const reducer::NmfOptions& reducer_opts,
    const surrogate::TreeHyperparams& tree_base) {
  SweepConfig cfg;
  cfg.c_values = {options.c};
  cfg.k_values = {options.k};
  cfg.depth_values = options.depths;
  cfg.n_class_groups = options.n_groups;
  cfg.group_seed = options.seed;
  cfg.target_kind = options.target_kind;
  cfg.threads = options.threads;
  return RunSweep(train, test, all_class_ids, cfg, reducer_opts, tree_base);
}

std::string TargetKindName(TargetKind kind) {
  return kind == TargetKind::kModelPredictions ? "model" : "truth";
}

std::string FormatReportJsonl(const std::vector<MetricReport>& reports) {
  std::string out;
  ordered_json cells = ordered_json::array();
  std::vector<double> acc;
  std::vector<double> f1;
  std::vector<double> train_acc;
  for (const MetricReport& r : reports) {
    for (const GroupResult& g : r.per_group) out += GroupLine(r, g).dump() + "\n";
    ordered_json cell;
    cell["c"] = r.c;
    cell["k"] = r.k;
    cell["depth"] = r.depth;
    cell["target_kind"] = TargetKindName(r.target_kind);
    cell["mean_accuracy"] = r.accuracy;
    cell["mean_f1_macro"] = r.f1_macro;
    cell["mean_train_accuracy"] = r.train_accuracy;
    cell["group_count"] = r.group_count;
    cells.push_back(cell);
    acc.push_back(r.accuracy);
    f1.push_back(r.f1_macro);
    train_acc.push_back(r.train_accuracy);
  }
  ordered_json summary;
  summary["summary"] = true;
  summary["cells"] = cells;
  summary["mean_accuracy"] = Mean(acc);
  summary["mean_f1_macro"] = Mean(f1);
  summary["mean_train_accuracy"] = Mean(train_acc);
  out += summary.dump() + "\n";
  return out;
}

void WriteReport(const std::vector<MetricReport>& reports,
                 const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) Fail(ErrorCode::kIo, "cannot write " + path.string());
  const std::string text = FormatReportJsonl(reports);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) Fail(ErrorCode::kIo, "write failed for " + path.string());
}

}  // namespace ncav::evaluator
