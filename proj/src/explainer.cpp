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

#include "ncav/explainer.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

#include "json.hpp"
#include "ncav/error.hpp"

namespace ncav::explainer {
namespace {

using nlohmann::json;
using surrogate::Branch;
using surrogate::NodeKind;
using surrogate::PathStep;
using surrogate::SurrogateTree;
using surrogate::TreeNode;

std::string FormatSignificant(double value, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", digits, value);
  return buf;
}

std::string EscapeDot(const std::string& text) {
  std::string out;
  for (char ch : text) {
    if (ch == '"' || ch == '\\') out.push_back('\\');
    if (ch == '\n') {
      out += "\\n";
      continue;
    }
    out.push_back(ch);
  }
  return out;
}

std::string ClassLabel(const GlobalExplanation& expl, ClassId id) {
  const auto it = expl.class_names.find(id);
  return it != expl.class_names.end() ? it->second
                                      : "Class " + std::to_string(id);
}

std::string NodeLabel(const GlobalExplanation& expl, const TreeNode& node) {
  const std::string samples = "samples=" + std::to_string(node.sample_count);
  if (!node.is_leaf()) {
    return "Concept " + std::to_string(node.concept_id) +
           "\\nthreshold=" + FormatSignificant(node.threshold, 4) + "\\n" +
           samples;
  }
  double best = 0.0;
  const auto probs = expl.leaf_probabilities.find(node.node_id);
  if (probs != expl.leaf_probabilities.end()) {
    for (const auto& [cls, p] : probs->second) best = std::max(best, p);
  }
  return EscapeDot(ClassLabel(expl, node.predicted_class)) + "\\n" + samples +
         "\\np=" + FormatSignificant(best, 2);
}

std::string PrototypeTooltip(const GlobalExplanation& expl,
                             std::size_t concept_id) {
  const auto it = expl.prototypes.find(concept_id);
  if (it == expl.prototypes.end()) return {};
  std::string out = "prototypes:";
  for (const scorer::Exemplar& ex : it->second.exemplars) {
    out += " " + std::to_string(ex.image_id);
  }
  return out;
}

std::string RenderDot(const GlobalExplanation& expl,
                      const std::vector<PathStep>* path,
                      const std::string& graph_label) {
  std::set<std::uint32_t> on_path;
  if (path != nullptr) {
    for (const PathStep& step : *path) on_path.insert(step.node_id);
  }
  const SurrogateTree& tree = expl.tree;
  std::string out = "digraph explanation {\n";
  out += "  node [shape=box, fontname=\"Helvetica\"];\n";
  if (!graph_label.empty()) {
    out += "  label=\"" + EscapeDot(graph_label) + "\";\n";
  }
  for (const TreeNode& node : tree.nodes) {
    out += "  n" + std::to_string(node.node_id) + " [label=\"" +
           NodeLabel(expl, node) + "\"";
    if (!node.is_leaf()) {
      const std::string tooltip = PrototypeTooltip(expl, node.concept_id);
      if (!tooltip.empty()) out += ", tooltip=\"" + tooltip + "\"";
    }
    if (on_path.contains(node.node_id)) out += ", color=blue";
    out += "];\n";
  }
  for (const TreeNode& node : tree.nodes) {
    if (node.is_leaf()) continue;
    const bool parent_on_path = on_path.contains(node.node_id);
    const auto edge = [&](std::uint32_t child, const char* label) {
      out += "  n" + std::to_string(node.node_id) + " -> n" +
             std::to_string(child) + " [label=\"" + label + "\"";
      if (parent_on_path && on_path.contains(child)) out += ", color=blue";
      out += "];\n";
    };
    edge(node.left_child, "Not similar");
    edge(node.right_child, "Similar");
  }
  out += "}\n";
  return out;
}

const char* BranchName(Branch b) {
  return b == Branch::kSimilar ? "Similar" : "Not similar";
}

json NodeJson(const GlobalExplanation& expl, const TreeNode& node) {
  json j;
  j["id"] = node.node_id;
  j["kind"] = node.is_leaf() ? "leaf" : "internal";
  if (!node.is_leaf()) {
    j["concept_id"] = node.concept_id;
    j["threshold"] = node.threshold;
    j["left"] = node.left_child;
    j["right"] = node.right_child;
  }
  j["samples"] = node.sample_count;
  json counts = json::array();
  for (std::size_t k = 0; k < expl.tree.classes.size(); ++k) {
    counts.push_back(
        {{"class_id", expl.tree.classes[k]}, {"count", node.class_counts[k]}});
  }
  j["class_counts"] = counts;
  j["predicted_class"] = node.predicted_class;
  j["impurity"] = node.impurity;
  if (node.is_leaf()) {
    json probs = json::array();
    const auto it = expl.leaf_probabilities.find(node.node_id);
    if (it != expl.leaf_probabilities.end()) {
      for (const auto& [cls, p] : it->second) {
        probs.push_back({{"class_id", cls}, {"p", p}});
      }
    }
    j["probabilities"] = probs;
  }
  return j;
}

json GlobalJson(const GlobalExplanation& expl, const char* kind) {
  const SurrogateTree& tree = expl.tree;
  json doc;
  doc["kind"] = kind;
  doc["tree"] = {
      {"root_id", tree.root_id},
      {"depth", tree.depth},
      {"feature_count", tree.feature_count},
      {"classes", tree.classes},
      {"hyperparams",
       {{"max_depth", tree.hyperparams.max_depth},
        {"min_samples_leaf", tree.hyperparams.min_samples_leaf},
        {"min_samples_split", tree.hyperparams.min_samples_split},
        {"random_state", tree.hyperparams.random_state}}}};
  json nodes = json::array();
  json edges = json::array();
  for (const TreeNode& node : tree.nodes) {
    nodes.push_back(NodeJson(expl, node));
    if (!node.is_leaf()) {
      edges.push_back({{"from", node.node_id},
                       {"to", node.left_child},
                       {"label", BranchName(Branch::kNotSimilar)}});
      edges.push_back({{"from", node.node_id},
                       {"to", node.right_child},
                       {"label", BranchName(Branch::kSimilar)}});
    }
  }
  doc["nodes"] = nodes;
  doc["edges"] = edges;
  json protos = json::object();
  for (const auto& [concept_id, proto] : expl.prototypes) {
    json list = json::array();
    for (const scorer::Exemplar& ex : proto.exemplars) {
      const auto path = expl.image_paths.find(ex.image_id);
      list.push_back(
          {{"image_id", ex.image_id},
           {"score", ex.score},
           {"image_path", path != expl.image_paths.end() ? json(path->second)
                                                        : json(nullptr)},
           {"mask", MaskReference(concept_id, ex.image_id)}});
    }
    protos[std::to_string(concept_id)] = list;
  }
  doc["prototypes"] = protos;
  json names = json::array();
  for (const auto& [id, name] : expl.class_names) {
    names.push_back({{"id", id}, {"name", name}});
  }
  doc["class_names"] = names;
  return doc;
}

[[noreturn]] void BadDocument(const std::string& what) {
  Fail(ErrorCode::kMalformedArtifact, "explanation JSON: " + what);
}

GlobalExplanation GlobalFromJson(const json& doc) {
  GlobalExplanation expl;
  SurrogateTree& tree = expl.tree;
  const json& t = doc.at("tree");
  tree.root_id = t.at("root_id").get<std::uint32_t>();
  tree.depth = t.at("depth").get<std::uint32_t>();
  tree.feature_count = t.at("feature_count").get<std::uint32_t>();
  tree.classes = t.at("classes").get<std::vector<ClassId>>();
  const json& hp = t.at("hyperparams");
  tree.hyperparams.max_depth = hp.at("max_depth").get<int>();
  tree.hyperparams.min_samples_leaf = hp.at("min_samples_leaf").get<int>();
  tree.hyperparams.min_samples_split = hp.at("min_samples_split").get<int>();
  tree.hyperparams.random_state = hp.at("random_state").get<std::int64_t>();

  for (const json& n : doc.at("nodes")) {
    TreeNode node;
    node.node_id = n.at("id").get<std::uint32_t>();
    const std::string kind = n.at("kind").get<std::string>();
    if (kind != "leaf" && kind != "internal") BadDocument("bad node kind");
    node.kind = kind == "leaf" ? NodeKind::kLeaf : NodeKind::kInternal;
    if (!node.is_leaf()) {
      node.concept_id = n.at("concept_id").get<std::uint32_t>();
      node.threshold = n.at("threshold").get<double>();
      node.left_child = n.at("left").get<std::uint32_t>();
      node.right_child = n.at("right").get<std::uint32_t>();
    }
    node.sample_count = n.at("samples").get<std::uint64_t>();
    for (const json& c : n.at("class_counts")) {
      node.class_counts.push_back(c.at("count").get<std::uint64_t>());
    }
    node.predicted_class = n.at("predicted_class").get<ClassId>();
    node.impurity = n.at("impurity").get<double>();
    if (node.is_leaf()) {
      auto& probs = expl.leaf_probabilities[node.node_id];
      for (const json& p : n.at("probabilities")) {
        probs[p.at("class_id").get<ClassId>()] = p.at("p").get<double>();
      }
    }
    if (node.node_id != tree.nodes.size()) BadDocument("nodes out of order");
    tree.nodes.push_back(std::move(node));
  }
  for (const auto& [key, list] : doc.at("prototypes").items()) {
    scorer::ConceptPrototype proto;
    proto.concept_id = std::stoull(key);
    for (const json& ex : list) {
      const auto id = ex.at("image_id").get<ImageId>();
      proto.exemplars.push_back({id, ex.at("score").get<double>()});
      if (!ex.at("image_path").is_null()) {
        expl.image_paths[id] = ex.at("image_path").get<std::string>();
      }
    }
    expl.prototypes[proto.concept_id] = std::move(proto);
  }
  for (const json& c : doc.at("class_names")) {
    expl.class_names[c.at("id").get<ClassId>()] = c.at("name").get<std::string>();
  }
  return expl;
}

json ParseDocument(const std::string& text, const char* expected_kind) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    BadDocument(e.what());
  }
  if (!doc.is_object() || doc.value("kind", "") != expected_kind) {
    BadDocument(std::string("expected kind '") + expected_kind + "'");
  }
  return doc;
}

}  // namespace

GlobalExplanation BuildGlobal(const surrogate::SurrogateTree& tree,
                              const scorer::ConceptScoreMatrix& scores,
                              const datastore::DatasetManifest& manifest,
                              std::size_t prototype_count) {
  if (scores.concepts() != tree.feature_count) {
    Fail(ErrorCode::kFeatureCountMismatch,
         "tree uses " + std::to_string(tree.feature_count) +
             " concepts, score matrix has " + std::to_string(scores.concepts()));
  }
  GlobalExplanation expl;
  expl.tree = tree;
  for (const TreeNode& node : tree.nodes) {
    if (node.is_leaf()) {
      auto& probs = expl.leaf_probabilities[node.node_id];
      for (std::size_t k = 0; k < tree.classes.size(); ++k) {
        probs[tree.classes[k]] =
            node.sample_count == 0
                ? 0.0
                : static_cast<double>(node.class_counts[k]) /
                      static_cast<double>(node.sample_count);
      }
    } else if (!expl.prototypes.contains(node.concept_id)) {
      expl.prototypes[node.concept_id] =
          scorer::SelectPrototypes(scores, node.concept_id, prototype_count);
    }
  }
  for (const datastore::ClassInfo& c : manifest.classes) {
    expl.class_names[c.id] = c.name;
  }
  for (const auto& [concept_id, proto] : expl.prototypes) {
    for (const scorer::Exemplar& ex : proto.exemplars) {
      if (auto path = manifest.ImagePath(ex.image_id)) {
        expl.image_paths[ex.image_id] = *path;
      }
    }
  }
  return expl;
}

LocalExplanation BuildLocal(const GlobalExplanation& global,
                            std::span<const double> instance_scores,
                            ImageId image_id) {
  LocalExplanation local;
  local.global = global;
  local.instance_image_id = image_id;
  local.path = surrogate::DecisionPath(global.tree, instance_scores);
  local.predicted_class = global.tree.node(local.path.back().node_id).predicted_class;
  local.instance_scores.assign(instance_scores.begin(), instance_scores.end());
  return local;
}

std::string EmitDot(const GlobalExplanation& expl) {
  return RenderDot(expl, nullptr, "");
}

std::string EmitDot(const LocalExplanation& expl) {
  return RenderDot(expl.global, &expl.path,
                   "image " + std::to_string(expl.instance_image_id) + ": " +
                       ClassLabel(expl.global, expl.predicted_class));
}

std::string EmitJson(const GlobalExplanation& expl) {
  return GlobalJson(expl, "global").dump(2) + "\n";
}

std::string EmitJson(const LocalExplanation& expl) {
  json doc = GlobalJson(expl.global, "local");
  json path = json::array();
  for (const PathStep& step : expl.path) {
    path.push_back({{"node_id", step.node_id},
                    {"branch", step.branch ? json(BranchName(*step.branch))
                                           : json(nullptr)}});
  }
  doc["path"] = path;
  doc["instance"] = {{"image_id", expl.instance_image_id},
                     {"predicted_class", expl.predicted_class},
                     {"scores", expl.instance_scores}};
  return doc.dump(2) + "\n";
}

GlobalExplanation ParseGlobalJson(const std::string& text) {
  const json doc = ParseDocument(text, "global");
  try {
    return GlobalFromJson(doc);
  } catch (const json::exception& e) {
    BadDocument(e.what());
  }
}

LocalExplanation ParseLocalJson(const std::string& text) {
  const json doc = ParseDocument(text, "local");
  try {
    LocalExplanation local;
    local.global = GlobalFromJson(doc);
    for (const json& step : doc.at("path")) {
      PathStep s;
      s.node_id = step.at("node_id").get<std::uint32_t>();
      if (!step.at("branch").is_null()) {
        const std::string b = step.at("branch").get<std::string>();
        s.branch = b == "Similar" ? Branch::kSimilar : Branch::kNotSimilar;
      }
      local.path.push_back(s);
    }
    const json& inst = doc.at("instance");
    local.instance_image_id = inst.at("image_id").get<ImageId>();
    local.predicted_class = inst.at("predicted_class").get<ClassId>();
    local.instance_scores = inst.at("scores").get<std::vector<double>>();
    return local;
  } catch (const json::exception& e) {
    BadDocument(e.what());
  }
}

std::string MaskReference(std::size_t concept_id, ImageId image_id) {
  return "masks/concept_" + std::to_string(concept_id) + "/image_" +
         std::to_string(image_id) + ".pgm";
}

std::size_t WriteMasks(const GlobalExplanation& expl,
                       const SpatialConceptMap& concept_maps,
                       const std::filesystem::path& masks_dir,
                       std::size_t resolution) {
  std::size_t flat = 0;
  for (const auto& [concept_id, proto] : expl.prototypes) {
    for (const scorer::Exemplar& ex : proto.exemplars) {
      const auto it = std::find(concept_maps.image_ids.begin(),
                                concept_maps.image_ids.end(), ex.image_id);
      if (it == concept_maps.image_ids.end()) {
        Fail(ErrorCode::kIndexOutOfRange,
             "prototype image " + std::to_string(ex.image_id) +
                 " missing from concept maps");
      }
      scorer::HeatmapMask mask = scorer::ConceptHeatmap(
          concept_maps,
          static_cast<std::size_t>(it - concept_maps.image_ids.begin()),
          concept_id);
      flat += mask.flat;
      if (resolution > 0) {
        mask = scorer::UpsampleNearest(mask, resolution, resolution);
      }
      const std::filesystem::path path =
          masks_dir / ("concept_" + std::to_string(concept_id)) /
          ("image_" + std::to_string(ex.image_id) + ".pgm");
      std::filesystem::create_directories(path.parent_path());
      scorer::WritePgm(mask, path);
    }
  }
  return flat;
}

}  // namespace ncav::explainer
