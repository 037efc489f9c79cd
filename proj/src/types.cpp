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

#include "ncav/types.hpp"

#include <cmath>
#include <numeric>

namespace ncav {

std::string Shape4::ToString() const {
  return "(" + std::to_string(n) + ", " + std::to_string(h) + ", " +
         std::to_string(w) + ", " + std::to_string(c) + ")";
}

void ValidateFeatureMaps(const FeatureMapBatch& batch) {
  const Shape4& s = batch.tensor.shape();
  if (s.n < 1 || s.h < 1 || s.w < 1 || s.c < 1) {
    Fail(ErrorCode::kShapeMismatch,
         "feature maps need non-empty dimensions, got " + s.ToString());
  }
  if (batch.image_ids.size() != s.n) {
    Fail(ErrorCode::kShapeMismatch,
         std::to_string(batch.image_ids.size()) + " image ids for " +
             std::to_string(s.n) + " images");
  }
  const auto data = batch.tensor.data();
  for (std::size_t k = 0; k < data.size(); ++k) {
    const float v = data[k];
    if (!std::isfinite(v)) {
      Fail(ErrorCode::kNonFinite,
           "non-finite activation at flat index " + std::to_string(k));
    }
    if (v < 0.0f) {
      Fail(ErrorCode::kNegativeActivation,
           "activation " + std::to_string(v) + " at flat index " +
               std::to_string(k) + "; feature maps must come from a ReLU layer");
    }
  }
}

std::vector<ImageId> SequentialIds(std::size_t n) {
  std::vector<ImageId> ids(n);
  std::iota(ids.begin(), ids.end(), ImageId{0});
  return ids;
}

}  // namespace ncav
