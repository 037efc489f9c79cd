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

#include "ncav/scorer.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "ncav/error.hpp"

namespace ncav::scorer {

ConceptScoreMatrix Gap(const SpatialConceptMap& s) {
  const Shape4& shape = s.tensor.shape();
  const auto cells = static_cast<double>(shape.h * shape.w);
  Matrix pooled = Matrix::Zero(static_cast<Eigen::Index>(shape.n),
                               static_cast<Eigen::Index>(shape.c));
  const auto data = s.tensor.data();
  for (std::size_t i = 0; i < shape.n; ++i) {
    for (std::size_t cell = 0; cell < shape.h * shape.w; ++cell) {
      const double* v = data.data() + (i * shape.h * shape.w + cell) * shape.c;
      for (std::size_t j = 0; j < shape.c; ++j) {
        pooled(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) +=
            v[j];
      }
    }
  }
  pooled /= cells;
  return ConceptScoreMatrix{std::move(pooled), s.image_ids};
}

ConceptPrototype SelectPrototypes(const ConceptScoreMatrix& scores,
                                  std::size_t concept_id, std::size_t count) {
  if (concept_id >= scores.concepts()) {
    Fail(ErrorCode::kConceptOutOfRange,
         "concept " + std::to_string(concept_id) + " of " +
             std::to_string(scores.concepts()));
  }
  if (scores.image_ids.size() != scores.size()) {
    Fail(ErrorCode::kShapeMismatch, "score matrix image ids misaligned");
  }
  const auto column = scores.scores.col(static_cast<Eigen::Index>(concept_id));
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto better = [&](std::size_t x, std::size_t y) {
    const double sx = column(static_cast<Eigen::Index>(x));
    const double sy = column(static_cast<Eigen::Index>(y));
    if (sx != sy) return sx > sy;
    return scores.image_ids[x] < scores.image_ids[y];
  };
  const std::size_t keep = std::min(count, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<long>(keep),
                    order.end(), better);

  ConceptPrototype proto;
  proto.concept_id = concept_id;
  for (std::size_t r = 0; r < keep; ++r) {
    proto.exemplars.push_back(
        {scores.image_ids[order[r]], column(static_cast<Eigen::Index>(order[r]))});
  }
  return proto;
}

HeatmapMask ConceptHeatmap(const SpatialConceptMap& s, std::size_t image_index,
                           std::size_t concept_id) {
  const Shape4& shape = s.tensor.shape();
  if (image_index >= shape.n) {
    Fail(ErrorCode::kIndexOutOfRange,
         "image index " + std::to_string(image_index) + " of " +
             std::to_string(shape.n));
  }
  if (concept_id >= shape.c) {
    Fail(ErrorCode::kIndexOutOfRange,
         "concept " + std::to_string(concept_id) + " of " +
             std::to_string(shape.c));
  }
  HeatmapMask out;
  out.height = shape.h;
  out.width = shape.w;
  out.concept_id = concept_id;
  out.image_id = s.image_ids.at(image_index);
  out.mask.assign(shape.h * shape.w, 0);

  double lo = s.tensor.at(image_index, 0, 0, concept_id);
  double hi = lo;
  for (std::size_t a = 0; a < shape.h; ++a) {
    for (std::size_t b = 0; b < shape.w; ++b) {
      const double v = s.tensor.at(image_index, a, b, concept_id);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (!(hi > lo)) {
    out.flat = true;
    return out;
  }
  for (std::size_t a = 0; a < shape.h; ++a) {
    for (std::size_t b = 0; b < shape.w; ++b) {
      const double v = s.tensor.at(image_index, a, b, concept_id);
      out.mask[a * shape.w + b] = (v - lo) / (hi - lo) > kHeatmapThreshold;
    }
  }
  return out;
}

HeatmapMask UpsampleNearest(const HeatmapMask& mask, std::size_t height,
                            std::size_t width) {
  if (height == 0 || width == 0) {
    Fail(ErrorCode::kInvalidArgument, "upsample target must be non-empty");
  }
  HeatmapMask out = mask;
  out.height = height;
  out.width = width;
  out.mask.assign(height * width, 0);
  for (std::size_t y = 0; y < height; ++y) {
    const std::size_t src_y = y * mask.height / height;
    for (std::size_t x = 0; x < width; ++x) {
      const std::size_t src_x = x * mask.width / width;
      out.mask[y * width + x] = mask.mask[src_y * mask.width + src_x];
    }
  }
  return out;
}

std::string EncodePgm(const HeatmapMask& mask) {
  std::string out = "P5\n" + std::to_string(mask.width) + " " +
                    std::to_string(mask.height) + "\n1\n";
  out.append(mask.mask.begin(), mask.mask.end());
  return out;
}

void WritePgm(const HeatmapMask& mask, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) Fail(ErrorCode::kIo, "cannot write " + path.string());
  const std::string bytes = EncodePgm(mask);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) Fail(ErrorCode::kIo, "write failed for " + path.string());
}

std::string MaskToJson(const HeatmapMask& mask) {
  std::string out = "[";
  for (std::size_t a = 0; a < mask.height; ++a) {
    if (a > 0) out += ",";
    out += "[";
    for (std::size_t b = 0; b < mask.width; ++b) {
      if (b > 0) out += ",";
      out += mask.at(a, b) ? "1" : "0";
    }
    out += "]";
  }
  out += "]";
  return out;
}

}  // namespace ncav::scorer
