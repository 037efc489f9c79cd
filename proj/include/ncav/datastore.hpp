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

// Dataset manifests, feature-map loading and model persistence.

#ifndef NCAV_DATASTORE_HPP_
#define NCAV_DATASTORE_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ncav/reducer.hpp"
#include "ncav/surrogate.hpp"
#include "ncav/types.hpp"

namespace ncav::datastore {

struct ClassInfo {
  ClassId id = 0;
  std::string name;
  bool operator==(const ClassInfo&) const = default;
};

struct DatasetManifest {
  std::string dataset_name;
  std::vector<ClassInfo> classes;
  // As written in the manifest; relative paths resolve against base_dir.
  std::string feature_maps_path;
  std::string ground_truth_path;
  std::string model_predictions_path;
  std::optional<std::vector<std::string>> image_paths;
  // Optional extension; images are numbered 0..n-1 when absent.
  std::optional<std::vector<ImageId>> image_ids;
  std::string model_name;
  std::string layer_name;

  std::filesystem::path base_dir;
  std::size_t image_count = 0;  // n of the feature tensor, filled on load

  std::filesystem::path Resolve(const std::string& relative) const;
  std::vector<ImageId> ImageIds() const;
  std::optional<std::string> ClassName(ClassId id) const;
  std::vector<ClassId> ClassIds() const;
  // Image path for an id, if the manifest lists image paths.
  std::optional<std::string> ImagePath(ImageId id) const;
};

struct LoadedDataset {
  FeatureMapBatch batch;
  LabelVector ground_truth;
  LabelVector predictions;
};

DatasetManifest LoadManifest(const std::filesystem::path& path);
LoadedDataset LoadFeatureMaps(const DatasetManifest& manifest);

// Writes features.npy, labels.npy, preds.npy and manifest.json into `dir`
// and returns the manifest path. Used by tests and synthetic generators.
std::filesystem::path WriteDataset(const std::filesystem::path& dir,
                                   DatasetManifest manifest,
                                   const LoadedDataset& data);
void SaveManifest(const DatasetManifest& manifest,
                  const std::filesystem::path& path);

void SaveReducer(const reducer::ReducerModel& model,
                 const std::filesystem::path& path);
reducer::ReducerModel LoadReducer(const std::filesystem::path& path);
std::string EncodeReducer(const reducer::ReducerModel& model);
reducer::ReducerModel DecodeReducer(const std::string& bytes);

void SaveTree(const surrogate::SurrogateTree& tree,
              const std::filesystem::path& path);
surrogate::SurrogateTree LoadTree(const std::filesystem::path& path);
std::string EncodeTree(const surrogate::SurrogateTree& tree);
surrogate::SurrogateTree DecodeTree(const std::string& bytes);

}  // namespace ncav::datastore

#endif  // NCAV_DATASTORE_HPP_
