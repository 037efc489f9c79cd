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

// Synthetic "planted concept" datasets. Each image is a non-negative mix of
// six concept templates (a channel direction painted over a random spatial
// patch) plus small uniform noise, and its label is a fixed depth-3 rule over
// which templates are present. The rule itself is the oracle labeler.

#ifndef NCAV_TESTS_PLANTED_HPP_
#define NCAV_TESTS_PLANTED_HPP_

#include <array>
#include <cstdint>
#include <random>
#include <vector>

#include "ncav/datastore.hpp"
#include "ncav/types.hpp"

namespace ncav::testing {

inline constexpr std::size_t kPlantedConcepts = 6;
inline constexpr std::array<ClassId, 8> kPlantedClasses = {3,  8,  14, 21,
                                                           30, 42, 57, 63};

struct PlantedOptions {
  std::size_t n = 400;
  std::size_t height = 5;
  std::size_t width = 5;
  std::size_t channels_per_concept = 4;
  std::size_t extra_channels = 4;  // pure-noise channels
  double noise = 0.02;
  // Probability that the ground-truth label disagrees with the rule; the
  // "model predictions" always follow the rule.
  double truth_flip = 0.0;
  std::uint64_t seed = 1;
};

struct PlantedDataset {
  datastore::LoadedDataset data;
  std::vector<std::array<bool, kPlantedConcepts>> presence;
};

inline ClassId PlantedRule(const std::array<bool, kPlantedConcepts>& p) {
  std::size_t leaf = 0;
  if (p[0]) {
    leaf = p[1] ? (p[2] ? 0 : 1) : (p[3] ? 2 : 3);
  } else {
    leaf = p[4] ? (p[5] ? 4 : 5) : (p[2] ? 6 : 7);
  }
  return kPlantedClasses[leaf];
}

inline datastore::DatasetManifest PlantedManifest() {
  datastore::DatasetManifest m;
  m.dataset_name = "planted";
  for (ClassId id : kPlantedClasses) {
    m.classes.push_back({id, "planted_" + std::to_string(id)});
  }
  m.model_name = "planted-generator";
  m.layer_name = "synthetic";
  return m;
}

inline PlantedDataset MakePlanted(const PlantedOptions& o) {
  std::mt19937_64 rng(o.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t c =
      kPlantedConcepts * o.channels_per_concept + o.extra_channels;

  // Fixed channel directions with disjoint supports.
  std::vector<std::vector<double>> directions(kPlantedConcepts,
                                              std::vector<double>(c, 0.0));
  for (std::size_t j = 0; j < kPlantedConcepts; ++j) {
    for (std::size_t q = 0; q < o.channels_per_concept; ++q) {
      directions[j][j * o.channels_per_concept + q] = 0.5 + 0.5 * unit(rng);
    }
  }

  PlantedDataset out;
  const Shape4 shape{o.n, o.height, o.width, c};
  Tensor4<float> tensor(shape);
  for (std::size_t i = 0; i < o.n; ++i) {
    std::array<bool, kPlantedConcepts> present{};
    for (std::size_t j = 0; j < kPlantedConcepts; ++j) {
      present[j] = unit(rng) < 0.5;
    }
    for (std::size_t a = 0; a < o.height; ++a) {
      for (std::size_t b = 0; b < o.width; ++b) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          tensor.at(i, a, b, ch) = static_cast<float>(o.noise * unit(rng));
        }
      }
    }
    for (std::size_t j = 0; j < kPlantedConcepts; ++j) {
      if (!present[j]) continue;
      const double intensity = 0.6 + 0.8 * unit(rng);
      // 3x3 patch (clipped) at a random position.
      const auto top = static_cast<std::size_t>(unit(rng) * o.height);
      const auto left = static_cast<std::size_t>(unit(rng) * o.width);
      for (std::size_t a = top; a < std::min(top + 3, o.height); ++a) {
        for (std::size_t b = left; b < std::min(left + 3, o.width); ++b) {
          for (std::size_t ch = 0; ch < c; ++ch) {
            tensor.at(i, a, b, ch) +=
                static_cast<float>(intensity * directions[j][ch]);
          }
        }
      }
    }
    const ClassId label = PlantedRule(present);
    ClassId truth = label;
    if (unit(rng) < o.truth_flip) {
      const auto pick = static_cast<std::size_t>(unit(rng) * kPlantedClasses.size());
      truth = kPlantedClasses[std::min(pick, kPlantedClasses.size() - 1)];
    }
    out.presence.push_back(present);
    out.data.predictions.push_back(label);
    out.data.ground_truth.push_back(truth);
  }
  out.data.batch.tensor = std::move(tensor);
  out.data.batch.image_ids = SequentialIds(o.n);
  return out;
}

// First half / second half split.
inline std::pair<datastore::LoadedDataset, datastore::LoadedDataset> SplitHalves(
    const datastore::LoadedDataset& all) {
  const Shape4& s = all.batch.tensor.shape();
  const std::size_t half = s.n / 2;
  const std::size_t stride = s.h * s.w * s.c;
  const auto take = [&](std::size_t begin, std::size_t end) {
    datastore::LoadedDataset part;
    const auto src = all.batch.tensor.data();
    std::vector<float> values(src.begin() + static_cast<long>(begin * stride),
                              src.begin() + static_cast<long>(end * stride));
    part.batch.tensor =
        Tensor4<float>(Shape4{end - begin, s.h, s.w, s.c}, std::move(values));
    part.batch.image_ids.assign(all.batch.image_ids.begin() + static_cast<long>(begin),
                                all.batch.image_ids.begin() + static_cast<long>(end));
    part.ground_truth.assign(all.ground_truth.begin() + static_cast<long>(begin),
                             all.ground_truth.begin() + static_cast<long>(end));
    part.predictions.assign(all.predictions.begin() + static_cast<long>(begin),
                            all.predictions.begin() + static_cast<long>(end));
    return part;
  };
  return {take(0, half), take(half, s.n)};
}

}  // namespace ncav::testing

#endif  // NCAV_TESTS_PLANTED_HPP_
