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

// Core value types shared by every stage of the pipeline.

#ifndef NCAV_TYPES_HPP_
#define NCAV_TYPES_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ncav/error.hpp"

namespace ncav {

using ClassId = std::int64_t;
using ImageId = std::int64_t;

// Per-image class labels, aligned by index with a FeatureMapBatch.
using LabelVector = std::vector<ClassId>;

using Matrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixF =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// (n, h, w, c) with c varying fastest.
struct Shape4 {
  std::size_t n = 0;
  std::size_t h = 0;
  std::size_t w = 0;
  std::size_t c = 0;

  std::size_t size() const { return n * h * w * c; }
  std::size_t cells_per_image() const { return h * w; }
  std::string ToString() const;

  bool operator==(const Shape4&) const = default;
};

// Dense C-order rank-4 array.
template <typename T>
class Tensor4 {
 public:
  Tensor4() = default;
  explicit Tensor4(Shape4 shape) : shape_(shape), data_(shape.size(), T{}) {}
  Tensor4(Shape4 shape, std::vector<T> data);

  const Shape4& shape() const { return shape_; }
  std::span<const T> data() const { return data_; }
  std::span<T> data() { return data_; }
  std::vector<T>& storage() { return data_; }

  std::size_t offset(std::size_t i, std::size_t a, std::size_t b,
                     std::size_t j) const {
    return ((i * shape_.h + a) * shape_.w + b) * shape_.c + j;
  }
  T& at(std::size_t i, std::size_t a, std::size_t b, std::size_t j) {
    return data_[offset(i, a, b, j)];
  }
  const T& at(std::size_t i, std::size_t a, std::size_t b,
              std::size_t j) const {
    return data_[offset(i, a, b, j)];
  }

  bool operator==(const Tensor4&) const = default;

 private:
  Shape4 shape_;
  std::vector<T> data_;
};

template <typename T>
Tensor4<T>::Tensor4(Shape4 shape, std::vector<T> data)
    : shape_(shape), data_(std::move(data)) {
  if (data_.size() != shape_.size()) {
    Fail(ErrorCode::kShapeMismatch,
         "tensor of shape " + shape_.ToString() + " needs " +
             std::to_string(shape_.size()) + " elements, got " +
             std::to_string(data_.size()));
  }
}

// Activations of one CNN layer for a batch of images. The loader guarantees
// every element is finite and >= 0.
struct FeatureMapBatch {
  Tensor4<float> tensor;
  std::vector<ImageId> image_ids;

  std::size_t size() const { return tensor.shape().n; }
  bool operator==(const FeatureMapBatch&) const = default;
};

// Per-cell concept scores S reshaped to (n, h, w, c').
struct SpatialConceptMap {
  Tensor4<double> tensor;
  std::vector<ImageId> image_ids;

  std::size_t size() const { return tensor.shape().n; }
  std::size_t concepts() const { return tensor.shape().c; }
  bool operator==(const SpatialConceptMap&) const = default;
};

// Checks shape, id count, finiteness and non-negativity. Throws Error.
void ValidateFeatureMaps(const FeatureMapBatch& batch);

// image ids 0..n-1.
std::vector<ImageId> SequentialIds(std::size_t n);

}  // namespace ncav

#endif  // NCAV_TYPES_HPP_
