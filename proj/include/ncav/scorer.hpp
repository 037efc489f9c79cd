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

// Pooling of spatial concept maps into per-image scores, prototype image
// selection and thresholded concept heatmaps.

#ifndef NCAV_SCORER_HPP_
#define NCAV_SCORER_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ncav/types.hpp"

namespace ncav::scorer {

inline constexpr std::size_t kDefaultPrototypeCount = 5;
inline constexpr double kHeatmapThreshold = 0.5;

// One row per image, one column per concept.
struct ConceptScoreMatrix {
  Matrix scores;
  std::vector<ImageId> image_ids;

  std::size_t size() const { return static_cast<std::size_t>(scores.rows()); }
  std::size_t concepts() const {
    return static_cast<std::size_t>(scores.cols());
  }
};

struct Exemplar {
  ImageId image_id = 0;
  double score = 0.0;
  bool operator==(const Exemplar&) const = default;
};

struct ConceptPrototype {
  std::size_t concept_id = 0;
  std::vector<Exemplar> exemplars;  // descending score, ties by image id
  bool operator==(const ConceptPrototype&) const = default;
};

struct HeatmapMask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> mask;  // row-major, 0 or 1
  std::size_t concept_id = 0;
  ImageId image_id = 0;
  // Spatially constant map: no localization signal, mask is all false.
  bool flat = false;

  bool at(std::size_t a, std::size_t b) const { return mask[a * width + b] != 0; }
  bool operator==(const HeatmapMask&) const = default;
};

// Global average pooling over the spatial axes.
ConceptScoreMatrix Gap(const SpatialConceptMap& s);

ConceptPrototype SelectPrototypes(const ConceptScoreMatrix& scores,
                                  std::size_t concept_id,
                                  std::size_t count = kDefaultPrototypeCount);

HeatmapMask ConceptHeatmap(const SpatialConceptMap& s, std::size_t image_index,
                           std::size_t concept_id);

// Nearest-neighbour resize of a mask to an arbitrary target resolution.
HeatmapMask UpsampleNearest(const HeatmapMask& mask, std::size_t height,
                            std::size_t width);

// Binary PGM, maxval 1.
std::string EncodePgm(const HeatmapMask& mask);
void WritePgm(const HeatmapMask& mask, const std::filesystem::path& path);
// JSON array of rows of 0/1.
std::string MaskToJson(const HeatmapMask& mask);

}  // namespace ncav::scorer

#endif  // NCAV_SCORER_HPP_
