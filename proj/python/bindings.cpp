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

// Python bindings. Arrays cross the boundary as numpy arrays in the same
// (n, h, w, c) layout the library uses.

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>
#include <sstream>

#include "ncav/cli.hpp"
#include "ncav/datastore.hpp"
#include "ncav/evaluator.hpp"
#include "ncav/explainer.hpp"
#include "ncav/reducer.hpp"
#include "ncav/scorer.hpp"
#include "ncav/surrogate.hpp"

namespace py = pybind11;

namespace ncav {
namespace {

template <typename T>
using CArray = py::array_t<T, py::array::c_style | py::array::forcecast>;

template <typename T>
Tensor4<T> ToTensor(const CArray<T>& a) {
  if (a.ndim() != 4) {
    Fail(ErrorCode::kShapeMismatch,
         "expected a 4-d (n, h, w, c) array, got " + std::to_string(a.ndim()) + " dims");
  }
  Shape4 s{static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)),
           static_cast<std::size_t>(a.shape(2)), static_cast<std::size_t>(a.shape(3))};
  return Tensor4<T>(s, std::vector<T>(a.data(), a.data() + s.size()));
}

template <typename T>
py::array_t<T> FromTensor(const Tensor4<T>& t) {
  const Shape4& s = t.shape();
  py::array_t<T> out({s.n, s.h, s.w, s.c});
  std::memcpy(out.mutable_data(), t.data().data(), s.size() * sizeof(T));
  return out;
}

std::vector<ImageId> IdsOr(const std::optional<std::vector<ImageId>>& ids, std::size_t n) {
  return ids ? *ids : SequentialIds(n);
}

FeatureMapBatch ToBatch(const CArray<float>& a,
                        const std::optional<std::vector<ImageId>>& ids) {
  FeatureMapBatch b{ToTensor(a), {}};
  b.image_ids = IdsOr(ids, b.tensor.shape().n);
  ValidateFeatureMaps(b);
  return b;
}

SpatialConceptMap ToConceptMap(const CArray<double>& a,
                               const std::optional<std::vector<ImageId>>& ids) {
  SpatialConceptMap m{ToTensor(a), {}};
  m.image_ids = IdsOr(ids, m.tensor.shape().n);
  return m;
}

scorer::ConceptScoreMatrix ToScores(const Matrix& scores,
                                    const std::optional<std::vector<ImageId>>& ids) {
  return {scores, IdsOr(ids, static_cast<std::size_t>(scores.rows()))};
}

std::span<const double> RowSpan(const std::vector<double>& row) { return row; }

datastore::DatasetManifest NamesManifest(
    const std::optional<std::filesystem::path>& manifest,
    const std::map<ClassId, std::string>& class_names) {
  datastore::DatasetManifest m;
  if (manifest) m = datastore::LoadManifest(*manifest);
  for (const auto& [id, name] : class_names) {
    auto it = std::find_if(m.classes.begin(), m.classes.end(),
                           [&](const datastore::ClassInfo& c) { return c.id == id; });
    if (it == m.classes.end()) {
      m.classes.push_back({id, name});
    } else {
      it->name = name;
    }
  }
  return m;
}

py::bytes AsBytes(const std::string& s) { return py::bytes(s); }

}  // namespace
}  // namespace ncav

PYBIND11_MODULE(_core, m) {
  using namespace ncav;
  m.doc() = "Concept extraction, surrogate decision trees and their explanations.";

  static py::exception<Error> error(m, "NcavError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object instance = py::reinterpret_borrow<py::object>(error.ptr())(e.what());
      instance.attr("code") = std::string(ErrorCodeName(e.code()));
      PyErr_SetObject(error.ptr(), instance.ptr());
    }
  });

  // reducer
  py::class_<reducer::ReducerModel>(m, "ReducerModel")
      .def_property_readonly("dictionary",
                             [](const reducer::ReducerModel& r) { return r.dictionary; })
      .def_readonly("fit_residual", &reducer::ReducerModel::fit_residual)
      .def_readonly("iterations_run", &reducer::ReducerModel::iterations_run)
      .def_readonly("seed", &reducer::ReducerModel::seed)
      .def_property_readonly("rank", &reducer::ReducerModel::rank)
      .def_property_readonly("channels", &reducer::ReducerModel::channels)
      .def("save", [](const reducer::ReducerModel& r, const std::filesystem::path& p) {
        datastore::SaveReducer(r, p);
      })
      .def_static("load", &datastore::LoadReducer)
      .def("to_bytes", [](const reducer::ReducerModel& r) {
        return AsBytes(datastore::EncodeReducer(r));
      })
      .def_static("from_bytes", [](const py::bytes& b) {
        return datastore::DecodeReducer(std::string(b));
      })
      .def("__eq__", [](const reducer::ReducerModel& a, const reducer::ReducerModel& b) {
        return a == b;
      });

  py::class_<reducer::NmfFit>(m, "NmfFit")
      .def_readonly("model", &reducer::NmfFit::model)
      .def_readonly("scores", &reducer::NmfFit::scores)
      .def_property_readonly("objective_history", [](const reducer::NmfFit& f) {
        return f.diagnostics.objective_history;
      })
      .def_property_readonly("converged",
                             [](const reducer::NmfFit& f) { return f.diagnostics.converged; })
      .def_property_readonly("reseeded_concepts", [](const reducer::NmfFit& f) {
        return f.diagnostics.reseeded_concepts;
      })
      .def_property_readonly("dead_concepts", [](const reducer::NmfFit& f) {
        return f.diagnostics.dead_concepts;
      });

  m.def(
      "fit_nmf",
      [](const Matrix& a, std::size_t rank, std::uint64_t seed, int max_iters, double rel_tol) {
        py::gil_scoped_release release;
        return reducer::FitNmf(a, {rank, seed, max_iters, rel_tol});
      },
      py::arg("a"), py::arg("rank"), py::arg("seed") = 0, py::arg("max_iters") = 200,
      py::arg("rel_tol") = 1e-4);
  m.def(
      "fit_reducer",
      [](const CArray<float>& features, std::size_t rank, std::uint64_t seed, int max_iters,
         double rel_tol) {
        FeatureMapBatch b = ToBatch(features, std::nullopt);
        py::gil_scoped_release release;
        return reducer::FitReducer(b, {rank, seed, max_iters, rel_tol});
      },
      py::arg("features"), py::arg("rank"), py::arg("seed") = 0, py::arg("max_iters") = 200,
      py::arg("rel_tol") = 1e-4);
  m.def(
      "transform",
      [](const CArray<float>& features, const reducer::ReducerModel& model, int max_iters,
         double rel_tol) {
        FeatureMapBatch b = ToBatch(features, std::nullopt);
        SpatialConceptMap s;
        {
          py::gil_scoped_release release;
          s = reducer::Transform(b, model, {max_iters, rel_tol});
        }
        return FromTensor(s.tensor);
      },
      py::arg("features"), py::arg("model"), py::arg("max_iters") = 200,
      py::arg("rel_tol") = 1e-4);
  m.def(
      "inverse_transform",
      [](const CArray<double>& concept_maps, const reducer::ReducerModel& model) {
        return FromTensor(
            reducer::InverseTransform(ToConceptMap(concept_maps, std::nullopt), model).tensor);
      },
      py::arg("concept_maps"), py::arg("model"));
  m.def("residual", &reducer::Residual, py::arg("a"), py::arg("s"), py::arg("d"));

  // scorer
  m.def(
      "gap",
      [](const CArray<double>& concept_maps) {
        return scorer::Gap(ToConceptMap(concept_maps, std::nullopt)).scores;
      },
      py::arg("concept_maps"));
  m.def(
      "select_prototypes",
      [](const Matrix& scores, std::size_t concept_id, std::size_t count,
         const std::optional<std::vector<ImageId>>& image_ids) {
        std::vector<std::pair<ImageId, double>> out;
        for (const auto& e :
             scorer::SelectPrototypes(ToScores(scores, image_ids), concept_id, count).exemplars) {
          out.emplace_back(e.image_id, e.score);
        }
        return out;
      },
      py::arg("scores"), py::arg("concept_id"), py::arg("count") = scorer::kDefaultPrototypeCount,
      py::arg("image_ids") = py::none());
  m.def(
      "concept_heatmap",
      [](const CArray<double>& concept_maps, std::size_t image_index, std::size_t concept_id) {
        const scorer::HeatmapMask mask = scorer::ConceptHeatmap(
            ToConceptMap(concept_maps, std::nullopt), image_index, concept_id);
        py::array_t<bool> out({mask.height, mask.width});
        std::copy(mask.mask.begin(), mask.mask.end(), out.mutable_data());
        return out;
      },
      py::arg("concept_maps"), py::arg("image_index"), py::arg("concept_id"));

  // surrogate
  py::class_<surrogate::TreeNode>(m, "TreeNode")
      .def_readonly("node_id", &surrogate::TreeNode::node_id)
      .def_property_readonly("is_leaf", &surrogate::TreeNode::is_leaf)
      .def_readonly("concept_id", &surrogate::TreeNode::concept_id)
      .def_readonly("threshold", &surrogate::TreeNode::threshold)
      .def_readonly("left_child", &surrogate::TreeNode::left_child)
      .def_readonly("right_child", &surrogate::TreeNode::right_child)
      .def_readonly("sample_count", &surrogate::TreeNode::sample_count)
      .def_readonly("class_counts", &surrogate::TreeNode::class_counts)
      .def_readonly("predicted_class", &surrogate::TreeNode::predicted_class)
      .def_readonly("impurity", &surrogate::TreeNode::impurity);

  py::class_<surrogate::SurrogateTree>(m, "SurrogateTree")
      .def_readonly("nodes", &surrogate::SurrogateTree::nodes)
      .def_readonly("classes", &surrogate::SurrogateTree::classes)
      .def_property_readonly("max_depth",
                             [](const surrogate::SurrogateTree& t) { return t.hyperparams.max_depth; })
      .def("predict",
           [](const surrogate::SurrogateTree& t, const Matrix& scores) {
             return surrogate::Predict(t, ToScores(scores, std::nullopt));
           })
      .def("decision_path",
           [](const surrogate::SurrogateTree& t, const std::vector<double>& row) {
             std::vector<std::pair<std::uint32_t, std::optional<std::string>>> out;
             for (const auto& step : surrogate::DecisionPath(t, RowSpan(row))) {
               std::optional<std::string> branch;
               if (step.branch) {
                 branch = *step.branch == surrogate::Branch::kSimilar ? "similar" : "not_similar";
               }
               out.emplace_back(step.node_id, branch);
             }
             return out;
           })
      .def("save", [](const surrogate::SurrogateTree& t,
                      const std::filesystem::path& p) { datastore::SaveTree(t, p); })
      .def_static("load", &datastore::LoadTree)
      .def("to_bytes",
           [](const surrogate::SurrogateTree& t) { return AsBytes(datastore::EncodeTree(t)); })
      .def_static("from_bytes",
                  [](const py::bytes& b) { return datastore::DecodeTree(std::string(b)); })
      .def("__eq__", [](const surrogate::SurrogateTree& a, const surrogate::SurrogateTree& b) {
        return a == b;
      });

  m.def(
      "fit_tree",
      [](const Matrix& scores, const LabelVector& targets, int max_depth, int min_samples_leaf,
         int min_samples_split) {
        surrogate::TrainingSet set{ToScores(scores, std::nullopt), targets, {}};
        return surrogate::FitTree(set, {max_depth, min_samples_leaf, min_samples_split});
      },
      py::arg("scores"), py::arg("targets"), py::arg("max_depth") = 10,
      py::arg("min_samples_leaf") = 1, py::arg("min_samples_split") = 2);

  // explainer
  py::class_<explainer::GlobalExplanation>(m, "GlobalExplanation")
      .def_readonly("tree", &explainer::GlobalExplanation::tree)
      .def_readonly("leaf_probabilities", &explainer::GlobalExplanation::leaf_probabilities)
      .def_property_readonly("prototypes",
                             [](const explainer::GlobalExplanation& g) {
                               std::map<std::size_t, std::vector<ImageId>> out;
                               for (const auto& [c, p] : g.prototypes) {
                                 for (const auto& e : p.exemplars) out[c].push_back(e.image_id);
                               }
                               return out;
                             })
      .def("to_dot", [](const explainer::GlobalExplanation& g) { return explainer::EmitDot(g); })
      .def("to_json",
           [](const explainer::GlobalExplanation& g) { return explainer::EmitJson(g); })
      .def_static("from_json", &explainer::ParseGlobalJson);

  py::class_<explainer::LocalExplanation>(m, "LocalExplanation")
      .def_readonly("instance_image_id", &explainer::LocalExplanation::instance_image_id)
      .def_readonly("predicted_class", &explainer::LocalExplanation::predicted_class)
      .def_readonly("instance_scores", &explainer::LocalExplanation::instance_scores)
      .def_property_readonly("path",
                             [](const explainer::LocalExplanation& l) {
                               std::vector<std::uint32_t> ids;
                               for (const auto& s : l.path) ids.push_back(s.node_id);
                               return ids;
                             })
      .def("to_dot", [](const explainer::LocalExplanation& l) { return explainer::EmitDot(l); })
      .def("to_json", [](const explainer::LocalExplanation& l) { return explainer::EmitJson(l); })
      .def_static("from_json", &explainer::ParseLocalJson);

  m.def(
      "explain_global",
      [](const surrogate::SurrogateTree& tree, const Matrix& scores,
         const std::optional<std::vector<ImageId>>& image_ids,
         const std::map<ClassId, std::string>& class_names,
         const std::optional<std::filesystem::path>& manifest, std::size_t prototype_count) {
        return explainer::BuildGlobal(tree, ToScores(scores, image_ids),
                                      NamesManifest(manifest, class_names), prototype_count);
      },
      py::arg("tree"), py::arg("scores"), py::arg("image_ids") = py::none(),
      py::arg("class_names") = std::map<ClassId, std::string>{},
      py::arg("manifest") = py::none(), py::arg("prototype_count") = scorer::kDefaultPrototypeCount);
  m.def(
      "explain_local",
      [](const explainer::GlobalExplanation& global, const std::vector<double>& row,
         ImageId image_id) { return explainer::BuildLocal(global, RowSpan(row), image_id); },
      py::arg("global_explanation"), py::arg("scores_row"), py::arg("image_id"));

  // evaluator
  m.def("fidelity", &evaluator::Fidelity, py::arg("model_preds"), py::arg("surrogate_preds"));
  m.def("accuracy", &evaluator::Accuracy, py::arg("truth"), py::arg("preds"));
  m.def(
      "f1_macro",
      [](const LabelVector& truth, const LabelVector& preds, const std::vector<ClassId>& ids) {
        return evaluator::F1Macro(truth, preds, ids);
      },
      py::arg("truth"), py::arg("preds"), py::arg("class_ids"));
  m.def(
      "sample_class_groups",
      [](const std::vector<ClassId>& ids, std::size_t k, std::size_t n_groups,
         std::uint64_t seed) { return evaluator::SampleClassGroups(ids, k, n_groups, seed); },
      py::arg("class_ids"), py::arg("k"), py::arg("n_groups"), py::arg("seed") = 0);
  m.def(
      "_run_sweep",
      [](const std::filesystem::path& train, const std::filesystem::path& test,
         const std::vector<std::size_t>& c_values, const std::vector<std::size_t>& k_values,
         const std::vector<int>& depths, std::size_t n_groups, std::uint64_t group_seed,
         const std::string& target, std::uint64_t seed, std::size_t threads) {
        evaluator::SweepConfig cfg;
        cfg.c_values = c_values;
        cfg.k_values = k_values;
        cfg.depth_values = depths;
        cfg.n_class_groups = n_groups;
        cfg.group_seed = group_seed;
        if (target == "truth") {
          cfg.target_kind = surrogate::TargetKind::kGroundTruth;
        } else if (target != "model") {
          Fail(ErrorCode::kInvalidArgument, "target must be 'model' or 'truth', got " + target);
        }
        cfg.threads = threads;
        const auto train_m = datastore::LoadManifest(train);
        const auto test_m = datastore::LoadManifest(test);
        py::gil_scoped_release release;
        reducer::NmfOptions nmf;
        nmf.seed = seed;
        return evaluator::FormatReportJsonl(evaluator::RunSweep(train_m, test_m, cfg, nmf, {}));
      },
      py::arg("train_manifest"), py::arg("test_manifest"), py::arg("c_values"),
      py::arg("k_values"), py::arg("depths"), py::arg("n_groups"), py::arg("group_seed"),
      py::arg("target"), py::arg("seed"), py::arg("threads"));

  // datastore
  m.def(
      "load_dataset",
      [](const std::filesystem::path& manifest_path) {
        const auto manifest = datastore::LoadManifest(manifest_path);
        const auto data = datastore::LoadFeatureMaps(manifest);
        py::dict out;
        out["features"] = FromTensor(data.batch.tensor);
        out["image_ids"] = data.batch.image_ids;
        out["ground_truth"] = data.ground_truth;
        out["predictions"] = data.predictions;
        std::map<ClassId, std::string> names;
        for (const auto& c : manifest.classes) names[c.id] = c.name;
        out["class_names"] = names;
        return out;
      },
      py::arg("manifest"));

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = cli::Dispatch(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"));
}
