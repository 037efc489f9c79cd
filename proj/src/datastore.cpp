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

#include "ncav/datastore.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <type_traits>

#include "json.hpp"

#include "ncav/error.hpp"
#include "ncav/npy.hpp"

namespace ncav::datastore {

static_assert(std::endian::native == std::endian::little,
              "artifact encoding assumes a little-endian host");

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr char kReducerMagic[4] = {'N', 'C', 'A', 'V'};
constexpr char kTreeMagic[4] = {'T', 'R', 'E', 'E'};
constexpr std::uint32_t kFormatVersion = 1;

class ByteWriter {
 public:
  template <typename T>
  void Put(T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    const auto* p = reinterpret_cast<const char*>(&value);
    out_.append(p, sizeof(T));
  }
  void PutBytes(const char* data, std::size_t size) { out_.append(data, size); }
  std::string Take() { return std::move(out_); }

 private:
  std::string out_;
};

class ByteReader {
 public:
  ByteReader(const std::string& bytes, const char* what)
      : bytes_(bytes), what_(what) {}

  template <typename T>
  T Get() {
    static_assert(std::is_trivially_copyable_v<T>);
    Need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  void Expect(const char (&magic)[4]) {
    Need(4);
    if (std::memcmp(bytes_.data() + pos_, magic, 4) != 0) {
      Fail(ErrorCode::kMalformedArtifact,
           std::string(what_) + ": wrong magic header");
    }
    pos_ += 4;
  }
  void CheckVersion() {
    const auto version = Get<std::uint32_t>();
    if (version != kFormatVersion) {
      Fail(ErrorCode::kMalformedArtifact,
           std::string(what_) + ": unsupported format version " +
               std::to_string(version));
    }
  }
  void ExpectEnd() const {
    if (pos_ != bytes_.size()) {
      Fail(ErrorCode::kMalformedArtifact,
           std::string(what_) + ": " + std::to_string(bytes_.size() - pos_) +
               " trailing bytes");
    }
  }
  void Need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
      Fail(ErrorCode::kMalformedArtifact, std::string(what_) + ": truncated");
    }
  }

 private:
  const std::string& bytes_;
  const char* what_;
  std::size_t pos_ = 0;
};

std::string ReadFile(const fs::path& path) {
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) {
    Fail(ErrorCode::kMissingFile, "no such file: " + path.string());
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return std::move(buf).str();
}

void WriteFile(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) Fail(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.close();
  if (!out) Fail(ErrorCode::kIo, "write failed for " + path.string());
}

[[noreturn]] void BadManifest(const fs::path& path, const std::string& what) {
  Fail(ErrorCode::kMalformedManifest, path.string() + ": " + what);
}

std::string RequireString(const json& doc, const char* key,
                          const fs::path& path) {
  if (!doc.contains(key) || !doc[key].is_string()) {
    BadManifest(path, std::string("field '") + key + "' must be a string");
  }
  return doc[key].get<std::string>();
}

npy::Header LabelHeader(const DatasetManifest& m, const std::string& field,
                        const fs::path& manifest_path) {
  const npy::Header header = npy::ReadHeader(m.Resolve(field));
  if (header.descr != "<i8" || header.fortran_order || header.shape.size() != 1) {
    BadManifest(manifest_path, field + " must be a 1-D <i8 C-order array");
  }
  return header;
}

LabelVector LoadLabels(const DatasetManifest& m, const std::string& field,
                       const char* role) {
  std::vector<std::size_t> shape;
  LabelVector labels = npy::ReadInt64(m.Resolve(field), &shape);
  if (shape.size() != 1 || labels.size() != m.image_count) {
    Fail(ErrorCode::kShapeMismatch,
         std::string(role) + " has " + std::to_string(labels.size()) +
             " entries for " + std::to_string(m.image_count) + " images");
  }
  std::set<ClassId> known;
  for (const ClassInfo& c : m.classes) known.insert(c.id);
  for (ClassId y : labels) {
    if (!known.contains(y)) {
      Fail(ErrorCode::kMalformedManifest,
           std::string(role) + " label " + std::to_string(y) +
               " is not a declared class");
    }
  }
  return labels;
}

}  // namespace

fs::path DatasetManifest::Resolve(const std::string& relative) const {
  const fs::path p(relative);
  return p.is_absolute() ? p : base_dir / p;
}

std::vector<ImageId> DatasetManifest::ImageIds() const {
  return image_ids ? *image_ids : SequentialIds(image_count);
}

std::optional<std::string> DatasetManifest::ClassName(ClassId id) const {
  for (const ClassInfo& c : classes) {
    if (c.id == id) return c.name;
  }
  return std::nullopt;
}

std::vector<ClassId> DatasetManifest::ClassIds() const {
  std::vector<ClassId> ids;
  for (const ClassInfo& c : classes) ids.push_back(c.id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::optional<std::string> DatasetManifest::ImagePath(ImageId id) const {
  if (!image_paths) return std::nullopt;
  const std::vector<ImageId> ids = ImageIds();
  const auto it = std::find(ids.begin(), ids.end(), id);
  if (it == ids.end()) return std::nullopt;
  return (*image_paths)[static_cast<std::size_t>(it - ids.begin())];
}

DatasetManifest LoadManifest(const fs::path& path) {
  const std::string text = ReadFile(path);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    BadManifest(path, std::string("invalid JSON: ") + e.what());
  }
  if (!doc.is_object()) BadManifest(path, "top level must be an object");

  DatasetManifest m;
  m.base_dir = path.parent_path();
  m.dataset_name = RequireString(doc, "dataset_name", path);
  m.feature_maps_path = RequireString(doc, "feature_maps_path", path);
  m.ground_truth_path = RequireString(doc, "ground_truth_path", path);
  m.model_predictions_path = RequireString(doc, "model_predictions_path", path);
  m.model_name = RequireString(doc, "model_name", path);
  m.layer_name = RequireString(doc, "layer_name", path);

  if (!doc.contains("classes") || !doc["classes"].is_array() ||
      doc["classes"].empty()) {
    BadManifest(path, "'classes' must be a non-empty array");
  }
  std::set<ClassId> seen;
  for (const json& c : doc["classes"]) {
    if (!c.is_object() || !c.contains("id") || !c["id"].is_number_integer() ||
        !c.contains("name") || !c["name"].is_string()) {
      BadManifest(path, "each class needs an integer 'id' and string 'name'");
    }
    const auto id = c["id"].get<ClassId>();
    if (id < 0) BadManifest(path, "class ids must be non-negative");
    if (!seen.insert(id).second) {
      BadManifest(path, "duplicate class id " + std::to_string(id));
    }
    m.classes.push_back({id, c["name"].get<std::string>()});
  }

  if (doc.contains("image_paths") && !doc["image_paths"].is_null()) {
    const json& paths = doc["image_paths"];
    if (!paths.is_array()) BadManifest(path, "'image_paths' must be an array");
    std::vector<std::string> list;
    for (const json& p : paths) {
      if (!p.is_string()) BadManifest(path, "image paths must be strings");
      list.push_back(p.get<std::string>());
    }
    m.image_paths = std::move(list);
  }
  if (doc.contains("image_ids") && !doc["image_ids"].is_null()) {
    const json& ids = doc["image_ids"];
    if (!ids.is_array()) BadManifest(path, "'image_ids' must be an array");
    std::vector<ImageId> list;
    std::set<ImageId> unique;
    for (const json& id : ids) {
      if (!id.is_number_integer()) BadManifest(path, "image ids must be integers");
      list.push_back(id.get<ImageId>());
      if (!unique.insert(list.back()).second) {
        BadManifest(path, "duplicate image id " + std::to_string(list.back()));
      }
    }
    m.image_ids = std::move(list);
  }

  const npy::Header features = npy::ReadHeader(m.Resolve(m.feature_maps_path));
  if (features.descr != "<f4" || features.fortran_order ||
      features.shape.size() != 4) {
    BadManifest(path, "feature maps must be a 4-D <f4 C-order array");
  }
  m.image_count = features.shape[0];
  const npy::Header truth = LabelHeader(m, m.ground_truth_path, path);
  const npy::Header preds = LabelHeader(m, m.model_predictions_path, path);
  if (truth.shape[0] != m.image_count || preds.shape[0] != m.image_count) {
    BadManifest(path, "label files have " + std::to_string(truth.shape[0]) +
                          " and " + std::to_string(preds.shape[0]) +
                          " entries for " + std::to_string(m.image_count) +
                          " feature maps");
  }
  if (m.image_paths && m.image_paths->size() != m.image_count) {
    BadManifest(path, "image_paths length differs from feature count");
  }
  if (m.image_ids && m.image_ids->size() != m.image_count) {
    BadManifest(path, "image_ids length differs from feature count");
  }
  return m;
}

LoadedDataset LoadFeatureMaps(const DatasetManifest& manifest) {
  std::vector<std::size_t> shape;
  std::vector<float> values =
      npy::ReadFloat32(manifest.Resolve(manifest.feature_maps_path), &shape);
  if (shape.size() != 4) {
    Fail(ErrorCode::kShapeMismatch, "feature maps must be rank 4");
  }
  const Shape4 s{shape[0], shape[1], shape[2], shape[3]};
  DatasetManifest m = manifest;
  m.image_count = s.n;

  LoadedDataset out;
  out.batch.tensor = Tensor4<float>(s, std::move(values));
  out.batch.image_ids = m.ImageIds();
  ValidateFeatureMaps(out.batch);
  out.ground_truth = LoadLabels(m, m.ground_truth_path, "ground truth");
  out.predictions = LoadLabels(m, m.model_predictions_path, "model predictions");
  return out;
}

void SaveManifest(const DatasetManifest& m, const fs::path& path) {
  json doc;
  doc["dataset_name"] = m.dataset_name;
  json classes = json::array();
  for (const ClassInfo& c : m.classes) {
    classes.push_back({{"id", c.id}, {"name", c.name}});
  }
  doc["classes"] = classes;
  doc["feature_maps_path"] = m.feature_maps_path;
  doc["ground_truth_path"] = m.ground_truth_path;
  doc["model_predictions_path"] = m.model_predictions_path;
  doc["image_paths"] = m.image_paths ? json(*m.image_paths) : json(nullptr);
  if (m.image_ids) doc["image_ids"] = *m.image_ids;
  doc["model_name"] = m.model_name;
  doc["layer_name"] = m.layer_name;
  WriteFile(path, doc.dump(2) + "\n");
}

fs::path WriteDataset(const fs::path& dir, DatasetManifest manifest,
                      const LoadedDataset& data) {
  fs::create_directories(dir);
  const Shape4& s = data.batch.tensor.shape();
  const std::size_t dims[4] = {s.n, s.h, s.w, s.c};
  const std::size_t n = data.ground_truth.size();
  manifest.feature_maps_path = "features.npy";
  manifest.ground_truth_path = "labels.npy";
  manifest.model_predictions_path = "preds.npy";
  npy::WriteFloat32(dir / manifest.feature_maps_path, data.batch.tensor.data(),
                    dims);
  npy::WriteInt64(dir / manifest.ground_truth_path, data.ground_truth,
                  std::span<const std::size_t>(&n, 1));
  const std::size_t n_preds = data.predictions.size();
  npy::WriteInt64(dir / manifest.model_predictions_path, data.predictions,
                  std::span<const std::size_t>(&n_preds, 1));
  const fs::path path = dir / "manifest.json";
  SaveManifest(manifest, path);
  return path;
}

std::string EncodeReducer(const reducer::ReducerModel& model) {
  ByteWriter w;
  w.PutBytes(kReducerMagic, 4);
  w.Put(kFormatVersion);
  w.Put(static_cast<std::uint32_t>(model.rank()));
  w.Put(static_cast<std::uint32_t>(model.channels()));
  w.PutBytes(reinterpret_cast<const char*>(model.dictionary.data()),
             static_cast<std::size_t>(model.dictionary.size()) * sizeof(float));
  w.Put(model.fit_residual);
  w.Put(model.iterations_run);
  w.Put(model.seed);
  return w.Take();
}

reducer::ReducerModel DecodeReducer(const std::string& bytes) {
  ByteReader r(bytes, "reducer file");
  r.Expect(kReducerMagic);
  r.CheckVersion();
  const auto rank = r.Get<std::uint32_t>();
  const auto channels = r.Get<std::uint32_t>();
  if (rank == 0 || channels == 0) {
    Fail(ErrorCode::kMalformedArtifact, "reducer file: empty dictionary");
  }
  r.Need(static_cast<std::size_t>(rank) * channels * sizeof(float));
  reducer::ReducerModel model;
  model.dictionary.resize(rank, channels);
  for (Eigen::Index k = 0; k < model.dictionary.size(); ++k) {
    model.dictionary.data()[k] = r.Get<float>();
  }
  model.fit_residual = r.Get<float>();
  model.iterations_run = r.Get<std::uint32_t>();
  model.seed = r.Get<std::uint64_t>();
  r.ExpectEnd();
  if (!model.dictionary.allFinite() || model.dictionary.minCoeff() < 0.0f) {
    Fail(ErrorCode::kMalformedArtifact,
         "reducer file: dictionary must be finite and non-negative");
  }
  return model;
}

void SaveReducer(const reducer::ReducerModel& model, const fs::path& path) {
  WriteFile(path, EncodeReducer(model));
}

reducer::ReducerModel LoadReducer(const fs::path& path) {
  return DecodeReducer(ReadFile(path));
}

// Node record: u32 id, u8 kind, 3 pad bytes, u32 concept, f64 threshold,
// u32 left, u32 right, u64 samples, f64 impurity, i64 predicted class, then
// one u64 count per class.
std::string EncodeTree(const surrogate::SurrogateTree& tree) {
  ByteWriter w;
  w.PutBytes(kTreeMagic, 4);
  w.Put(kFormatVersion);
  w.Put(static_cast<std::int32_t>(tree.hyperparams.max_depth));
  w.Put(static_cast<std::int32_t>(tree.hyperparams.min_samples_leaf));
  w.Put(static_cast<std::int32_t>(tree.hyperparams.min_samples_split));
  w.Put(tree.hyperparams.random_state);
  w.Put(tree.root_id);
  w.Put(tree.depth);
  w.Put(tree.feature_count);
  w.Put(static_cast<std::uint32_t>(tree.classes.size()));
  for (ClassId c : tree.classes) w.Put(c);
  w.Put(static_cast<std::uint32_t>(tree.nodes.size()));
  for (const surrogate::TreeNode& node : tree.nodes) {
    w.Put(node.node_id);
    w.Put(static_cast<std::uint8_t>(node.kind));
    const char pad[3] = {0, 0, 0};
    w.PutBytes(pad, 3);
    w.Put(node.concept_id);
    w.Put(node.threshold);
    w.Put(node.left_child);
    w.Put(node.right_child);
    w.Put(node.sample_count);
    w.Put(node.impurity);
    w.Put(node.predicted_class);
    for (std::uint64_t count : node.class_counts) w.Put(count);
  }
  return w.Take();
}

surrogate::SurrogateTree DecodeTree(const std::string& bytes) {
  using surrogate::NodeKind;
  const auto bad = [](const std::string& what) {
    Fail(ErrorCode::kMalformedArtifact, "tree file: " + what);
  };
  ByteReader r(bytes, "tree file");
  r.Expect(kTreeMagic);
  r.CheckVersion();
  surrogate::SurrogateTree tree;
  tree.hyperparams.max_depth = r.Get<std::int32_t>();
  tree.hyperparams.min_samples_leaf = r.Get<std::int32_t>();
  tree.hyperparams.min_samples_split = r.Get<std::int32_t>();
  tree.hyperparams.random_state = r.Get<std::int64_t>();
  tree.root_id = r.Get<std::uint32_t>();
  tree.depth = r.Get<std::uint32_t>();
  tree.feature_count = r.Get<std::uint32_t>();
  const auto n_classes = r.Get<std::uint32_t>();
  r.Need(static_cast<std::size_t>(n_classes) * sizeof(ClassId));
  for (std::uint32_t k = 0; k < n_classes; ++k) {
    tree.classes.push_back(r.Get<ClassId>());
  }
  const auto n_nodes = r.Get<std::uint32_t>();
  if (n_nodes == 0) bad("no nodes");
  for (std::uint32_t i = 0; i < n_nodes; ++i) {
    surrogate::TreeNode node;
    node.node_id = r.Get<std::uint32_t>();
    const auto kind = r.Get<std::uint8_t>();
    r.Get<std::uint8_t>();
    r.Get<std::uint16_t>();
    if (kind > 1) bad("unknown node kind");
    node.kind = static_cast<NodeKind>(kind);
    node.concept_id = r.Get<std::uint32_t>();
    node.threshold = r.Get<double>();
    node.left_child = r.Get<std::uint32_t>();
    node.right_child = r.Get<std::uint32_t>();
    node.sample_count = r.Get<std::uint64_t>();
    node.impurity = r.Get<double>();
    node.predicted_class = r.Get<ClassId>();
    r.Need(static_cast<std::size_t>(n_classes) * sizeof(std::uint64_t));
    for (std::uint32_t k = 0; k < n_classes; ++k) {
      node.class_counts.push_back(r.Get<std::uint64_t>());
    }
    if (node.node_id != i) bad("node ids must follow preorder index");
    tree.nodes.push_back(std::move(node));
  }
  r.ExpectEnd();
  if (tree.root_id != 0) bad("root must be the first node");
  // Preorder children always follow their parent and must be in range.
  for (const surrogate::TreeNode& node : tree.nodes) {
    if (node.kind == NodeKind::kInternal) {
      if (node.left_child <= node.node_id || node.right_child <= node.node_id ||
          node.left_child >= n_nodes || node.right_child >= n_nodes) {
        bad("child index out of range at node " + std::to_string(node.node_id));
      }
      if (node.concept_id >= tree.feature_count) bad("concept id out of range");
    }
  }
  return tree;
}

void SaveTree(const surrogate::SurrogateTree& tree, const fs::path& path) {
  WriteFile(path, EncodeTree(tree));
}

surrogate::SurrogateTree LoadTree(const fs::path& path) {
  return DecodeTree(ReadFile(path));
}

}  // namespace ncav::datastore
