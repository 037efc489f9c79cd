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

// NMF concept extraction. A batch of feature maps is flattened to a
// (n*h*w) x c matrix A and factorized as A ~= S * D with S, D >= 0. The rows
// of D are the concept directions; S holds each spatial cell's similarity to
// them. Lee-Seung multiplicative updates on the Frobenius objective.

#ifndef NCAV_REDUCER_HPP_
#define NCAV_REDUCER_HPP_

#include <cstddef>
#include <cstdint>
#include <vector>

#include "ncav/types.hpp"

namespace ncav::reducer {

// Denominator floor for the multiplicative updates.
inline constexpr double kUpdateEpsilon = 1e-12;

struct ReducerModel {
  MatrixF dictionary;  // c' x c, row j is concept direction j
  float fit_residual = 0.0f;  // ||A - SD||_F / ||A||_F at end of fit
  std::uint32_t iterations_run = 0;
  std::uint64_t seed = 0;

  std::size_t rank() const { return static_cast<std::size_t>(dictionary.rows()); }
  std::size_t channels() const {
    return static_cast<std::size_t>(dictionary.cols());
  }
};

bool operator==(const ReducerModel& a, const ReducerModel& b);

struct NmfOptions {
  std::size_t rank = 15;
  std::uint64_t seed = 0;
  int max_iters = 200;
  double rel_tol = 1e-4;
};

struct InferenceOptions {
  int max_iters = 200;
  double rel_tol = 1e-4;
};

struct NmfDiagnostics {
  // Frobenius objective ||A - SD||_F at initialization and after every
  // iteration.
  std::vector<double> objective_history;
  // Concepts whose dictionary row collapsed to zero and was re-seeded once.
  std::vector<std::size_t> reseeded_concepts;
  // Concepts that collapsed again (or could not be re-seeded) and stay zero.
  std::vector<std::size_t> dead_concepts;
  bool converged = false;  // stopped on rel_tol rather than max_iters
};

struct NmfFit {
  ReducerModel model;
  Matrix scores;  // S, rows x c'
  NmfDiagnostics diagnostics;
};

// Row (i*h*w + a*w + b) of the result is the cell vector at (a, b) of image i.
Matrix Flatten(const FeatureMapBatch& batch);
FeatureMapBatch Unflatten(const Matrix& flat, const Shape4& shape,
                          std::vector<ImageId> image_ids);

NmfFit FitNmf(const Matrix& a, const NmfOptions& options);

// Fits on a validated batch; convenience for Flatten + FitNmf.
NmfFit FitReducer(const FeatureMapBatch& batch, const NmfOptions& options);

// Solves for S >= 0 with the dictionary held fixed.
Matrix InferScores(const Matrix& a, const ReducerModel& model,
                   const InferenceOptions& options,
                   NmfDiagnostics* diagnostics = nullptr);

SpatialConceptMap Transform(const FeatureMapBatch& batch,
                            const ReducerModel& model,
                            const InferenceOptions& options = {});

// S * D reshaped back to (n, h, w, c).
FeatureMapBatch InverseTransform(const SpatialConceptMap& scores,
                                 const ReducerModel& model);

// ||A - SD||_F / ||A||_F.
double Residual(const Matrix& a, const Matrix& s, const Matrix& d);

}  // namespace ncav::reducer

#endif  // NCAV_REDUCER_HPP_
