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

#include "ncav/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <span>

#include "CLI11.hpp"
#include "ncav/datastore.hpp"
#include "ncav/error.hpp"
#include "ncav/evaluator.hpp"
#include "ncav/explainer.hpp"
#include "ncav/reducer.hpp"
#include "ncav/scorer.hpp"
#include "ncav/surrogate.hpp"

namespace ncav::cli {
namespace {

namespace fs = std::filesystem;
using surrogate::TargetKind;

struct InferenceFlags {
  int max_iters = 200;
  double rel_tol = 1e-4;
};

void AddInferenceFlags(CLI::App* cmd, InferenceFlags& flags) {
  cmd->add_option("--max-iters", flags.max_iters, "NMF iteration budget")
      ->check(CLI::Range(1, 1000000));
  cmd->add_option("--rel-tol", flags.rel_tol,
                  "stop when the relative objective decrease falls below this")
      ->check(CLI::PositiveNumber);
}

const std::map<std::string, TargetKind> kTargets{
    {"model", TargetKind::kModelPredictions},
    {"truth", TargetKind::kGroundTruth}};

// CheckedTransformer would print the enum values as raw bytes in help and
// error text, so map the names to their numeric values by hand.
CLI::Validator TargetTransformer() {
  return CLI::Validator(
      [](std::string& value) -> std::string {
        std::string lower = CLI::detail::to_lower(value);
        auto it = kTargets.find(lower);
        if (it == kTargets.end()) return "target must be model or truth, got " + value;
        value = std::to_string(static_cast<int>(it->second));
        return {};
      },
      "{model,truth}");
}

void WriteText(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) Fail(ErrorCode::kIo, "cannot write " + path.string());
  out << text;
  out.close();
  if (!out) Fail(ErrorCode::kIo, "write failed for " + path.string());
}

std::size_t ThreadHint() {
  const char* env = std::getenv("NCAV_THREADS");
  if (env == nullptr) return 1;
  const long value = std::strtol(env, nullptr, 10);
  return value > 0 ? static_cast<std::size_t>(value) : 1;
}

struct ExplainInputs {
  datastore::DatasetManifest manifest;
  SpatialConceptMap concept_maps;
  scorer::ConceptScoreMatrix scores;
  surrogate::SurrogateTree tree;
};

ExplainInputs LoadExplainInputs(const std::string& manifest_path,
                                const std::string& reducer_path,
                                const std::string& tree_path,
                                const InferenceFlags& inference) {
  ExplainInputs in;
  in.manifest = datastore::LoadManifest(manifest_path);
  const datastore::LoadedDataset data = datastore::LoadFeatureMaps(in.manifest);
  const reducer::ReducerModel model = datastore::LoadReducer(reducer_path);
  in.tree = datastore::LoadTree(tree_path);
  in.concept_maps = reducer::Transform(
      data.batch, model, {inference.max_iters, inference.rel_tol});
  in.scores = scorer::Gap(in.concept_maps);
  return in;
}

}  // namespace

int Dispatch(const std::vector<std::string>& args, std::ostream& out,
             std::ostream& err) {
  CLI::App app{"Concept-based decision-tree explanations for CNN feature maps",
               "ncav"};
  app.require_subcommand(1);

  // fit-reducer
  std::string fit_manifest;
  std::size_t fit_concepts = 15;
  std::uint64_t fit_seed = 0;
  InferenceFlags fit_iter;
  std::string fit_out;
  CLI::App* fit = app.add_subcommand("fit-reducer", "Fit the NMF concept reducer");
  fit->add_option("--manifest", fit_manifest, "dataset manifest")->required();
  fit->add_option("--concepts", fit_concepts, "number of concepts c'")
      ->check(CLI::Range(std::size_t{1}, std::size_t{100000}));
  fit->add_option("--seed", fit_seed, "initialization seed");
  AddInferenceFlags(fit, fit_iter);
  fit->add_option("--out", fit_out, "reducer output file")->required();

  // explain-global
  std::string eg_manifest, eg_reducer, eg_tree, eg_dot, eg_json, eg_masks;
  std::size_t eg_prototypes = scorer::kDefaultPrototypeCount;
  std::size_t eg_mask_size = 0;
  InferenceFlags eg_iter;
  CLI::App* eg = app.add_subcommand("explain-global", "Emit the global tree explanation");
  eg->add_option("--manifest", eg_manifest)->required();
  eg->add_option("--reducer", eg_reducer)->required();
  eg->add_option("--tree", eg_tree)->required();
  eg->add_option("--out-dot", eg_dot)->required();
  eg->add_option("--out-json", eg_json);
  eg->add_option("--masks-dir", eg_masks, "write prototype heatmap masks here");
  eg->add_option("--prototypes", eg_prototypes, "exemplars per concept")
      ->check(CLI::Range(std::size_t{1}, std::size_t{1000}));
  eg->add_option("--mask-size", eg_mask_size,
                 "nearest-neighbour upsample masks to this square size")
      ->check(CLI::Range(std::size_t{0}, std::size_t{16384}));
  AddInferenceFlags(eg, eg_iter);

  // explain-local
  std::string el_manifest, el_reducer, el_tree, el_dot, el_json;
  ImageId el_image = 0;
  InferenceFlags el_iter;
  CLI::App* el = app.add_subcommand("explain-local", "Emit the decision path for one image");
  el->add_option("--manifest", el_manifest)->required();
  el->add_option("--reducer", el_reducer)->required();
  el->add_option("--tree", el_tree)->required();
  el->add_option("--image-id", el_image)->required();
  el->add_option("--out-dot", el_dot)->required();
  el->add_option("--out-json", el_json);
  AddInferenceFlags(el, el_iter);

  // evaluate
  std::string ev_train, ev_test, ev_reducer, ev_report, ev_tree_out;
  TargetKind ev_target = TargetKind::kModelPredictions;
  surrogate::TreeHyperparams ev_hp;
  InferenceFlags ev_iter;
  CLI::App* ev = app.add_subcommand("evaluate", "Fit a tree with a fitted reducer and score it");
  ev->add_option("--train-manifest", ev_train)->required();
  ev->add_option("--test-manifest", ev_test)->required();
  ev->add_option("--reducer", ev_reducer)->required();
  ev->add_option("--target", ev_target, "model|truth")
      ->required()
      ->transform(TargetTransformer());
  ev->add_option("--max-depth", ev_hp.max_depth)->check(CLI::Range(1, 4096));
  ev->add_option("--min-samples-leaf", ev_hp.min_samples_leaf)
      ->check(CLI::Range(1, 1 << 30));
  ev->add_option("--min-samples-split", ev_hp.min_samples_split)
      ->check(CLI::Range(2, 1 << 30));
  ev->add_option("--report", ev_report)->required();
  ev->add_option("--tree-out", ev_tree_out, "also persist the fitted tree");
  AddInferenceFlags(ev, ev_iter);

  // sweep
  std::string sw_train, sw_test, sw_report;
  evaluator::SweepConfig sw_cfg;
  std::uint64_t sw_seed = 0;
  InferenceFlags sw_iter;
  CLI::App* sw = app.add_subcommand("sweep", "Concept-count x class-count sweep");
  sw->add_option("--train-manifest", sw_train)->required();
  sw->add_option("--test-manifest", sw_test)->required();
  sw->add_option("--c-values", sw_cfg.c_values)
      ->required()
      ->delimiter(',')
      ->check(CLI::Range(std::size_t{1}, std::size_t{100000}));
  sw->add_option("--k-values", sw_cfg.k_values)
      ->required()
      ->delimiter(',')
      ->check(CLI::Range(std::size_t{1}, std::size_t{100000}));
  sw->add_option("--depths", sw_cfg.depth_values, "tree depths (default 10)")
      ->delimiter(',')
      ->check(CLI::Range(1, 4096));
  sw->add_option("--groups", sw_cfg.n_class_groups)
      ->required()
      ->check(CLI::Range(std::size_t{1}, std::size_t{100000}));
  sw->add_option("--group-seed", sw_cfg.group_seed)->required();
  sw->add_option("--target", sw_cfg.target_kind, "model|truth")
      ->required()
      ->transform(TargetTransformer());
  sw->add_option("--seed", sw_seed, "reducer seed");
  sw->add_option("--report", sw_report)->required();
  AddInferenceFlags(sw, sw_iter);

  // depth-sweep
  std::string ds_train, ds_test, ds_report;
  evaluator::DepthSweepOptions ds_opts;
  std::uint64_t ds_seed = 0;
  InferenceFlags ds_iter;
  CLI::App* ds = app.add_subcommand("depth-sweep", "Tree-depth sweep at fixed c and k");
  ds->add_option("--train-manifest", ds_train)->required();
  ds->add_option("--test-manifest", ds_test)->required();
  ds->add_option("--depths", ds_opts.depths)
      ->required()
      ->delimiter(',')
      ->check(CLI::Range(1, 4096));
  ds->add_option("--concepts", ds_opts.c)
      ->check(CLI::Range(std::size_t{1}, std::size_t{100000}));
  ds->add_option("--classes", ds_opts.k)
      ->check(CLI::Range(std::size_t{1}, std::size_t{100000}));
  ds->add_option("--groups", ds_opts.n_groups)
      ->check(CLI::Range(std::size_t{1}, std::size_t{100000}));
  ds->add_option("--group-seed", ds_opts.seed);
  ds->add_option("--target", ds_opts.target_kind, "model|truth (default truth)")
      ->transform(TargetTransformer());
  ds->add_option("--seed", ds_seed, "reducer seed");
  ds->add_option("--report", ds_report)->required();
  AddInferenceFlags(ds, ds_iter);

  std::vector<const char*> argv;
  for (const std::string& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (fit->parsed()) {
      const auto manifest = datastore::LoadManifest(fit_manifest);
      const auto data = datastore::LoadFeatureMaps(manifest);
      const reducer::NmfFit result = reducer::FitReducer(
          data.batch,
          {fit_concepts, fit_seed, fit_iter.max_iters, fit_iter.rel_tol});
      datastore::SaveReducer(result.model, fit_out);
      out << "fitted " << result.model.rank() << " concepts in "
          << result.model.iterations_run << " iterations, relative residual "
          << result.model.fit_residual << "\n";
      for (std::size_t k : result.diagnostics.dead_concepts) {
        err << "warning: concept " << k << " collapsed to zero\n";
      }
    } else if (eg->parsed()) {
      const ExplainInputs in =
          LoadExplainInputs(eg_manifest, eg_reducer, eg_tree, eg_iter);
      const auto expl =
          explainer::BuildGlobal(in.tree, in.scores, in.manifest, eg_prototypes);
      WriteText(eg_dot, explainer::EmitDot(expl));
      if (!eg_json.empty()) WriteText(eg_json, explainer::EmitJson(expl));
      if (!eg_masks.empty()) {
        const std::size_t flat =
            explainer::WriteMasks(expl, in.concept_maps, eg_masks, eg_mask_size);
        if (flat > 0) {
          err << "warning: " << flat << " prototype heatmaps were spatially flat\n";
        }
      }
    } else if (el->parsed()) {
      const ExplainInputs in =
          LoadExplainInputs(el_manifest, el_reducer, el_tree, el_iter);
      const auto& ids = in.scores.image_ids;
      const auto it = std::find(ids.begin(), ids.end(), el_image);
      if (it == ids.end()) {
        Fail(ErrorCode::kIndexOutOfRange,
             "image id " + std::to_string(el_image) + " not in manifest");
      }
      const auto row = static_cast<Eigen::Index>(it - ids.begin());
      const Eigen::RowVectorXd scores = in.scores.scores.row(row);
      const auto global = explainer::BuildGlobal(in.tree, in.scores, in.manifest);
      const auto local = explainer::BuildLocal(
          global, std::span<const double>(scores.data(), scores.size()), el_image);
      WriteText(el_dot, explainer::EmitDot(local));
      if (!el_json.empty()) WriteText(el_json, explainer::EmitJson(local));
      out << "image " << el_image << " -> class " << local.predicted_class << "\n";
    } else if (ev->parsed()) {
      const auto train_manifest = datastore::LoadManifest(ev_train);
      const auto test_manifest = datastore::LoadManifest(ev_test);
      const auto train = datastore::LoadFeatureMaps(train_manifest);
      const auto test = datastore::LoadFeatureMaps(test_manifest);
      const auto model = datastore::LoadReducer(ev_reducer);
      const std::vector<ClassId> classes = train_manifest.ClassIds();
      const evaluator::CellResult cell = evaluator::EvaluateWithReducer(
          train, test, model, ev_target, ev_hp, classes,
          {ev_iter.max_iters, ev_iter.rel_tol});
      evaluator::MetricReport report;
      report.c = model.rank();
      report.k = classes.size();
      report.depth = ev_hp.max_depth;
      report.target_kind = ev_target;
      report.per_group = {cell.metrics};
      report.per_group_values = {cell.metrics.accuracy};
      report.accuracy = report.mean = cell.metrics.accuracy;
      report.f1_macro = cell.metrics.f1_macro;
      report.train_accuracy = cell.metrics.train_accuracy;
      report.group_count = 1;
      evaluator::WriteReport({report}, ev_report);
      if (!ev_tree_out.empty()) datastore::SaveTree(cell.tree, ev_tree_out);
      out << (ev_target == TargetKind::kModelPredictions ? "fidelity "
                                                         : "accuracy ")
          << cell.metrics.accuracy << ", f1_macro " << cell.metrics.f1_macro
          << "\n";
    } else if (sw->parsed()) {
      sw_cfg.threads = ThreadHint();
      const auto reports = evaluator::RunSweep(
          datastore::LoadManifest(sw_train), datastore::LoadManifest(sw_test),
          sw_cfg, {15, sw_seed, sw_iter.max_iters, sw_iter.rel_tol}, {});
      evaluator::WriteReport(reports, sw_report);
      out << "wrote " << reports.size() << " sweep cells\n";
    } else if (ds->parsed()) {
      ds_opts.threads = ThreadHint();
      const auto train_manifest = datastore::LoadManifest(ds_train);
      const auto train = datastore::LoadFeatureMaps(train_manifest);
      const auto test = datastore::LoadFeatureMaps(datastore::LoadManifest(ds_test));
      const std::vector<ClassId> classes = train_manifest.ClassIds();
      const auto reports = evaluator::RunDepthSweep(
          train, test, classes, ds_opts,
          {ds_opts.c, ds_seed, ds_iter.max_iters, ds_iter.rel_tol});
      evaluator::WriteReport(reports, ds_report);
      out << "wrote " << reports.size() << " depth cells\n";
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitOk;
}

}  // namespace ncav::cli
