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

// Global and local explanation documents for a fitted surrogate tree, with
// DOT and JSON renderings.

#ifndef NCAV_EXPLAINER_HPP_
#define NCAV_EXPLAINER_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ncav/datastore.hpp"
#include "ncav/scorer.hpp"
#include "ncav/surrogate.hpp"

namespace ncav::explainer {

struct GlobalExplanation {
  surrogate::SurrogateTree tree;
  // One entry per concept tested by an internal node.
  std::map<std::size_t, scorer::ConceptPrototype> prototypes;
  std::map<ClassId, std::string> class_names;
  // Leaf node id -> class id -> class_count / sample_count.
  std::map<std::uint32_t, std::map<ClassId, double>> leaf_probabilities;
  // Source image paths for the prototype exemplars, when the manifest has them.
  std::map<ImageId, std::string> image_paths;

  bool operator==(const GlobalExplanation&) const = default;
};

struct LocalExplanation {
  GlobalExplanation global;
  ImageId instance_image_id = 0;
  std::vector<surrogate::PathStep> path;
  ClassId predicted_class = 0;
  std::vector<double> instance_scores;

  bool operator==(const LocalExplanation&) const = default;
};

GlobalExplanation BuildGlobal(
    const surrogate::SurrogateTree& tree,
    const scorer::ConceptScoreMatrix& scores,
    const datastore::DatasetManifest& manifest,
    std::size_t prototype_count = scorer::kDefaultPrototypeCount);

LocalExplanation BuildLocal(const GlobalExplanation& global,
                            std::span<const double> instance_scores,
                            ImageId image_id);

std::string EmitDot(const GlobalExplanation& expl);
std::string EmitDot(const LocalExplanation& expl);

std::string EmitJson(const GlobalExplanation& expl);
std::string EmitJson(const LocalExplanation& expl);
GlobalExplanation ParseGlobalJson(const std::string& text);
LocalExplanation ParseLocalJson(const std::string& text);

// "masks/concept_{j}/image_{id}.pgm", relative to the output directory.
std::string MaskReference(std::size_t concept_id, ImageId image_id);

// Writes one heatmap PGM per prototype exemplar as
// `masks_dir/concept_{j}/image_{id}.pgm`. A non-zero `resolution` upsamples
// masks to that square size.
// Returns the number of masks that were spatially flat.
std::size_t WriteMasks(const GlobalExplanation& expl,
                       const SpatialConceptMap& concept_maps,
                       const std::filesystem::path& masks_dir,
                       std::size_t resolution = 0);

}  // namespace ncav::explainer

#endif  // NCAV_EXPLAINER_HPP_
