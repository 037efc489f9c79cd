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

#include <random>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "json.hpp"
#include "support/planted.hpp"
#include "support/temp_dir.hpp"

namespace ncav::evaluator {
namespace {

template <typename F>
ErrorCode CodeOf(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::kInvalidArgument;
}

// Precision/recall form of per-class F1, used as an oracle for the
// 2TP/(2TP+FP+FN) implementation.
double F1Oracle(const LabelVector& truth, const LabelVector& preds,
                const std::vector<ClassId>& classes) {
  double total = 0.0;
  for (ClassId c : classes) {
    double tp = 0, pred_pos = 0, true_pos = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      tp += truth[i] == c && preds[i] == c;
      pred_pos += preds[i] == c;
      true_pos += truth[i] == c;
    }
    const double p = pred_pos > 0 ? tp / pred_pos : 0.0;
    const double r = true_pos > 0 ? tp / true_pos : 0.0;
    total += p + r > 0 ? 2 * p * r / (p + r) : 0.0;
  }
  return total / static_cast<double>(classes.size());
}

struct PlantedSplits {
  datastore::LoadedDataset train;
  datastore::LoadedDataset test;
  std::vector<ClassId> classes;
};

const PlantedSplits& Planted() {
  static const PlantedSplits splits = [] {
    testing::PlantedOptions o;
    o.truth_flip = 0.1;
    auto all = testing::MakePlanted(o);
    auto [train, test] = testing::SplitHalves(all.data);
    return PlantedSplits{train, test,
                         {testing::kPlantedClasses.begin(),
                          testing::kPlantedClasses.end()}};
  }();
  return splits;
}

TEST(Fidelity, Agreement) {
  EXPECT_EQ(Fidelity({0, 1, 1, 0}, {0, 1, 0, 0}), 0.75);
  EXPECT_EQ(Fidelity({3, 3, 9}, {3, 3, 9}), 1.0);
  EXPECT_EQ(CodeOf([] { Fidelity({}, {}); }), ErrorCode::kEmptyInput);
  EXPECT_EQ(CodeOf([] { Fidelity({1}, {1, 2}); }), ErrorCode::kLengthMismatch);
}

TEST(Fidelity, SelfAgreementIsOne) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> cls(0, 9);
  for (int t = 0; t < 20; ++t) {
    LabelVector v(1 + t * 3);
    for (auto& x : v) x = cls(rng);
    EXPECT_EQ(Fidelity(v, v), 1.0);
  }
}

TEST(Accuracy, Examples) {
  EXPECT_EQ(Accuracy({0, 1}, {0, 1}), 1.0);
  EXPECT_EQ(Accuracy({0, 1, 2, 0}, {0, 0, 2, 1}), 0.5);
  EXPECT_EQ(CodeOf([] { Accuracy({0, 1}, {0}); }), ErrorCode::kLengthMismatch);
}

TEST(F1Macro, PerfectPrediction) {
  const std::vector<ClassId> classes = {4, 8};
  EXPECT_EQ(F1Macro({4, 8, 8, 4}, {4, 8, 8, 4}, classes), 1.0);
  EXPECT_EQ(F1Macro({4, 8, 8, 4}, {4, 8, 8, 4}, classes),
            Accuracy({4, 8, 8, 4}, {4, 8, 8, 4}));
}

TEST(F1Macro, HandComputedExample) {
  const std::vector<ClassId> classes = {0, 1};
  const LabelVector truth = {0, 0, 1, 1};
  const LabelVector preds = {0, 0, 0, 0};
  const double f1 = F1Macro(truth, preds, classes);
  EXPECT_NEAR(f1, 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(f1, F1Oracle(truth, preds, classes), 1e-15);
}

TEST(F1Macro, AbsentClassCountsAsZero) {
  const std::vector<ClassId> classes = {0, 1, 2};
  EXPECT_NEAR(F1Macro({0, 1}, {0, 1}, classes), 2.0 / 3.0, 1e-15);
}

TEST(F1Macro, NeverCorrectIsZero) {
  const std::vector<ClassId> classes = {0, 1, 2};
  EXPECT_EQ(F1Macro({0, 1, 2}, {1, 2, 0}, classes), 0.0);
}

TEST(F1Macro, MatchesOracleOnRandomLabels) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> cls(0, 4);
  const std::vector<ClassId> classes = {0, 1, 2, 3, 4};
  for (int t = 0; t < 30; ++t) {
    LabelVector truth(25), preds(25);
    for (auto& x : truth) x = cls(rng);
    for (auto& x : preds) x = cls(rng);
    const double f1 = F1Macro(truth, preds, classes);
    EXPECT_NEAR(f1, F1Oracle(truth, preds, classes), 1e-12);
    EXPECT_LE(f1, 1.0);
    EXPECT_GE(f1, 0.0);
  }
}

TEST(SampleClassGroups, DeterministicDistinctSorted) {
  std::vector<ClassId> all(200);
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<ClassId>(i);
  const auto groups = SampleClassGroups(all, 4, 10, 7);
  ASSERT_EQ(groups.size(), 10u);
  for (const auto& g : groups) {
    ASSERT_EQ(g.size(), 4u);
    EXPECT_TRUE(std::is_sorted(g.begin(), g.end()));
    EXPECT_EQ(std::set<ClassId>(g.begin(), g.end()).size(), 4u);
    for (ClassId c : g) EXPECT_TRUE(c >= 0 && c < 200);
  }
  EXPECT_EQ(SampleClassGroups(all, 4, 10, 7), groups);
  EXPECT_NE(SampleClassGroups(all, 4, 10, 8), groups);
}

TEST(SampleClassGroups, FullSetWhenKIsEverything) {
  const std::vector<ClassId> all = {9, 2, 5};
  for (const auto& g : SampleClassGroups(all, 3, 4, 1)) {
    EXPECT_EQ(g, (std::vector<ClassId>{2, 5, 9}));
  }
}

TEST(SampleClassGroups, KTooLarge) {
  const std::vector<ClassId> all = {1, 2};
  EXPECT_EQ(CodeOf([&] { SampleClassGroups(all, 3, 1, 0); }),
            ErrorCode::kKTooLarge);
}

TEST(SampleClassGroups, RoughlyUniform) {
  std::vector<ClassId> all(10);
  for (std::size_t i = 0; i < 10; ++i) all[i] = static_cast<ClassId>(i);
  std::map<ClassId, int> hits;
  for (const auto& g : SampleClassGroups(all, 3, 2000, 3)) {
    for (ClassId c : g) ++hits[c];
  }
  for (const auto& [c, n] : hits) EXPECT_NEAR(n, 600, 90) << c;
}

TEST(SubsetByClass, KeepsOrderAndAlignment) {
  const auto& p = Planted();
  const std::vector<ClassId> keep = {8, 42};
  const auto sub = SubsetByClass(p.train, keep);
  ASSERT_EQ(sub.batch.size(), sub.ground_truth.size());
  ASSERT_EQ(sub.batch.size(), sub.predictions.size());
  std::size_t expected = 0;
  for (ClassId y : p.train.ground_truth) expected += y == 8 || y == 42;
  EXPECT_EQ(sub.batch.size(), expected);
  EXPECT_TRUE(std::is_sorted(sub.batch.image_ids.begin(), sub.batch.image_ids.end()));
  for (std::size_t i = 0; i < sub.batch.size(); ++i) {
    const auto orig = static_cast<std::size_t>(sub.batch.image_ids[i]);
    EXPECT_EQ(sub.ground_truth[i], p.train.ground_truth[orig]);
    EXPECT_EQ(sub.predictions[i], p.train.predictions[orig]);
    EXPECT_EQ(sub.batch.tensor.at(i, 1, 2, 3), p.train.batch.tensor.at(orig, 1, 2, 3));
  }
}

TEST(RunSweep, PlantedFidelity) {
  const auto& p = Planted();
  SweepConfig cfg;
  cfg.c_values = {6};
  cfg.k_values = {8};
  cfg.depth_values = {3};
  cfg.n_class_groups = 1;
  const auto reports = RunSweep(p.train, p.test, p.classes, cfg, {}, {});
  ASSERT_EQ(reports.size(), 1u);
  EXPECT_GE(reports[0].accuracy, 0.95);
  EXPECT_EQ(reports[0].group_count, 1u);
  EXPECT_EQ(reports[0].per_group[0].train_count, 200u);
  EXPECT_EQ(reports[0].per_group[0].test_count, 200u);
}

TEST(RunSweep, MeansAndCellOrder) {
  const auto& p = Planted();
  SweepConfig cfg;
  cfg.c_values = {3, 6};
  cfg.k_values = {2, 4};
  cfg.depth_values = {2, 3};
  cfg.n_class_groups = 3;
  cfg.group_seed = 11;
  cfg.target_kind = TargetKind::kGroundTruth;
  const auto reports = RunSweep(p.train, p.test, p.classes, cfg, {}, {});
  ASSERT_EQ(reports.size(), 8u);
  std::size_t i = 0;
  for (std::size_t c : {3, 6}) {
    for (std::size_t k : {2, 4}) {
      for (int d : {2, 3}) {
        const MetricReport& r = reports[i++];
        EXPECT_EQ(r.c, c);
        EXPECT_EQ(r.k, k);
        EXPECT_EQ(r.depth, d);
        ASSERT_EQ(r.per_group_values.size(), 3u);
        double sum = 0.0;
        for (std::size_t g = 0; g < 3; ++g) {
          EXPECT_EQ(r.per_group[g].group_index, g);
          EXPECT_EQ(r.per_group[g].class_ids.size(), k);
          sum += r.per_group_values[g];
          EXPECT_GE(r.per_group_values[g], 0.0);
          EXPECT_LE(r.per_group_values[g], 1.0);
        }
        EXPECT_DOUBLE_EQ(r.mean, sum / 3.0);
        EXPECT_EQ(r.mean, r.accuracy);
      }
    }
  }
  // Same groups for every c and depth at a given k.
  EXPECT_EQ(reports[0].per_group[1].class_ids, reports[5].per_group[1].class_ids);
}

TEST(RunSweep, SubsetClosure) {
  const auto& p = Planted();
  SweepConfig cfg;
  cfg.c_values = {4};
  cfg.k_values = {3};
  cfg.depth_values = {3};
  cfg.n_class_groups = 4;
  const auto reports = RunSweep(p.train, p.test, p.classes, cfg, {}, {});
  for (const GroupResult& g : reports[0].per_group) {
    std::size_t n_train = 0, n_test = 0;
    for (ClassId y : p.train.ground_truth) {
      n_train += std::count(g.class_ids.begin(), g.class_ids.end(), y);
    }
    for (ClassId y : p.test.ground_truth) {
      n_test += std::count(g.class_ids.begin(), g.class_ids.end(), y);
    }
    EXPECT_EQ(g.train_count, n_train);
    EXPECT_EQ(g.test_count, n_test);
  }
}

TEST(RunSweep, DeterministicAcrossThreadCounts) {
  const auto& p = Planted();
  SweepConfig cfg;
  cfg.c_values = {3, 5};
  cfg.k_values = {3};
  cfg.depth_values = {2, 4};
  cfg.n_class_groups = 3;
  cfg.group_seed = 5;
  const auto a = RunSweep(p.train, p.test, p.classes, cfg, {}, {});
  const auto b = RunSweep(p.train, p.test, p.classes, cfg, {}, {});
  cfg.threads = 3;
  const auto c = RunSweep(p.train, p.test, p.classes, cfg, {}, {});
  EXPECT_EQ(a, b);
  EXPECT_EQ(a, c);
  EXPECT_EQ(FormatReportJsonl(a), FormatReportJsonl(c));
}

TEST(RunSweep, RejectsIneligibleGroups) {
  // Class 63 never appears in training, so groups must still have two
  // trainable classes.
  auto p = Planted();
  for (auto& y : p.train.ground_truth) {
    if (y == 63) y = 57;
  }
  SweepConfig cfg;
  cfg.c_values = {2};
  cfg.k_values = {2};
  cfg.depth_values = {2};
  cfg.n_class_groups = 10;
  cfg.target_kind = TargetKind::kGroundTruth;
  const auto reports = RunSweep(p.train, p.test, p.classes, cfg, {}, {});
  for (const GroupResult& g : reports[0].per_group) {
    EXPECT_EQ(std::count(g.class_ids.begin(), g.class_ids.end(), 63), 0);
  }
}

TEST(RunSweep, InvalidConfig) {
  const auto& p = Planted();
  SweepConfig cfg;
  cfg.c_values = {};
  EXPECT_THROW(RunSweep(p.train, p.test, p.classes, cfg, {}, {}), Error);
  cfg.c_values = {2};
  cfg.k_values = {9};
  EXPECT_EQ(CodeOf([&] { RunSweep(p.train, p.test, p.classes, cfg, {}, {}); }),
            ErrorCode::kKTooLarge);
}

TEST(RunSweep, ManifestOverloadMatchesInMemory) {
  const auto& p = Planted();
  testing::TempDir dir;
  const auto train_path = datastore::WriteDataset(dir / "train", testing::PlantedManifest(), p.train);
  const auto test_path = datastore::WriteDataset(dir / "test", testing::PlantedManifest(), p.test);
  SweepConfig cfg;
  cfg.c_values = {6};
  cfg.k_values = {4};
  cfg.depth_values = {3};
  cfg.n_class_groups = 2;
  const auto from_files = RunSweep(datastore::LoadManifest(train_path),
                                   datastore::LoadManifest(test_path), cfg, {}, {});
  EXPECT_EQ(from_files, RunSweep(p.train, p.test, p.classes, cfg, {}, {}));
}

TEST(RunDepthSweep, TrainingAccuracyNonDecreasing) {
  const auto& p = Planted();
  DepthSweepOptions o;
  o.depths = {2, 4, 6, 8, 10, 12, 14, 16, 18, 20, 22, 24};
  o.c = 6;
  o.k = 8;
  o.n_groups = 1;
  const auto reports = RunDepthSweep(p.train, p.test, p.classes, o);
  ASSERT_EQ(reports.size(), 12u);
  for (std::size_t i = 1; i < reports.size(); ++i) {
    EXPECT_GE(reports[i].train_accuracy, reports[i - 1].train_accuracy)
        << "depth " << reports[i].depth;
  }
}

TEST(RunDepthSweep, SingleDepth) {
  const auto& p = Planted();
  DepthSweepOptions o;
  o.depths = {5};
  o.c = 4;
  o.k = 4;
  o.n_groups = 2;
  const auto reports = RunDepthSweep(p.train, p.test, p.classes, o);
  ASSERT_EQ(reports.size(), 1u);
  EXPECT_EQ(reports[0].depth, 5);
  EXPECT_EQ(reports[0].target_kind, TargetKind::kGroundTruth);
}

TEST(EvaluateWithReducer, CopyOfModelLabelsGivesFidelityOne) {
  const auto& p = Planted();
  const reducer::NmfFit fit = reducer::FitReducer(p.train.batch, {.rank = 6});
  const CellResult r = EvaluateWithReducer(p.train, p.train, fit.model,
                                           TargetKind::kModelPredictions,
                                           {.max_depth = 24}, p.classes);
  EXPECT_EQ(r.metrics.train_accuracy, r.metrics.accuracy);
  EXPECT_GE(r.metrics.accuracy, 0.99);
  EXPECT_EQ(Fidelity(p.train.predictions, p.train.predictions), 1.0);
}

TEST(Report, JsonLinesFormat) {
  const auto& p = Planted();
  SweepConfig cfg;
  cfg.c_values = {4};
  cfg.k_values = {3};
  cfg.depth_values = {2, 3};
  cfg.n_class_groups = 2;
  const std::string text =
      FormatReportJsonl(RunSweep(p.train, p.test, p.classes, cfg, {}, {}));
  std::istringstream in(text);
  std::vector<nlohmann::json> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(nlohmann::json::parse(line));
  ASSERT_EQ(lines.size(), 5u);
  for (std::size_t i = 0; i < 4; ++i) {
    for (const char* key : {"c", "k", "depth", "target_kind", "group_index",
                            "class_ids", "accuracy", "f1_macro"}) {
      EXPECT_TRUE(lines[i].contains(key)) << key;
    }
    EXPECT_EQ(lines[i]["target_kind"], "model");
  }
  EXPECT_EQ(lines[4]["summary"], true);
  EXPECT_EQ(lines[4]["cells"].size(), 2u);
  const double mean = lines[4]["mean_accuracy"].get<double>();
  const double expected = (lines[0]["accuracy"].get<double>() + lines[1]["accuracy"].get<double>() +
                           lines[2]["accuracy"].get<double>() + lines[3]["accuracy"].get<double>()) /
                          4.0;
  EXPECT_NEAR(mean, expected, 1e-12);
}

}  // namespace
}  // namespace ncav::evaluator
