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

#include "ncav/reducer.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "ncav/error.hpp"

namespace ncav::reducer {
namespace {

constexpr Eigen::Index kRowBlock = 512;

std::string Dims(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void CheckNonNegative(const Matrix& a) {
  if (!a.allFinite()) {
    Fail(ErrorCode::kNonFinite, "input matrix contains non-finite values");
  }
  if (a.size() > 0 && a.minCoeff() < 0.0) {
    Fail(ErrorCode::kNonNegativeViolation,
         "input matrix has negative entry " + std::to_string(a.minCoeff()));
  }
}

void CheckIterationOptions(int max_iters, double rel_tol) {
  if (max_iters < 1) {
    Fail(ErrorCode::kInvalidArgument, "max_iters must be >= 1");
  }
  if (!(rel_tol > 0.0)) {
    Fail(ErrorCode::kInvalidArgument, "rel_tol must be > 0");
  }
}

// Uniform draws in (0, 1] scaled so that S*D has the magnitude of A.
Matrix SeededFactor(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols,
                    double scale) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = (1.0 - unit(rng)) * scale;
  }
  return m;
}

double InitScale(const Matrix& a, std::size_t rank) {
  return std::sqrt(a.mean() / static_cast<double>(rank));
}

// ||A - SD||_F evaluated in row blocks so the full residual is never held.
double Objective(const Matrix& a, const Matrix& s, const Matrix& d) {
  double total = 0.0;
  for (Eigen::Index start = 0; start < a.rows(); start += kRowBlock) {
    const Eigen::Index len = std::min(kRowBlock, a.rows() - start);
    total += (a.middleRows(start, len) - s.middleRows(start, len) * d)
                 .squaredNorm();
  }
  return std::sqrt(total);
}

// Up to this many multiplicative steps on one factor per outer iteration,
// reusing the products with the other factor. Each step is an exact
// Lee-Seung update, so the objective still never increases.
constexpr int kMaxInnerUpdates = 10;
// Inner steps stop once a step moves the factor by less than this fraction
// of the first step.
constexpr double kInnerStopRatio = 0.1;

// X <- X .* numer ./ (X * gram), repeated.
void RepeatUpdate(const Matrix& numer, const Matrix& gram, Matrix& x,
                  int max_steps) {
  double first_step = 0.0;
  for (int step = 0; step < max_steps; ++step) {
    Matrix next =
        x.cwiseProduct(numer).cwiseQuotient((x * gram).cwiseMax(kUpdateEpsilon));
    const double moved = (next - x).norm();
    x = std::move(next);
    if (step == 0) {
      first_step = moved;
    } else if (moved <= kInnerStopRatio * first_step) {
      break;
    }
  }
}

void UpdateScores(const Matrix& a, const Matrix& d, Matrix& s, int steps) {
  RepeatUpdate(a * d.transpose(), d * d.transpose(), s, steps);
}

void UpdateDictionary(const Matrix& a, const Matrix& s, Matrix& d) {
  // Same rule as the score update, applied to D^T.
  Matrix dt = d.transpose();
  RepeatUpdate(a.transpose() * s, s.transpose() * s, dt, kMaxInnerUpdates);
  d = dt.transpose();
}

// Replaces the zero dictionary row `k` by the positive part of the residual
// row with the largest positive mass, then sets column k of S to its exact
// non-negative least-squares value. Since column k contributed nothing
// before, the objective cannot increase. Returns false if the residual has
// no positive part.
bool ReseedConcept(const Matrix& a, Matrix& s, Matrix& d, Eigen::Index k) {
  Eigen::Index best_row = -1;
  double best_mass = 0.0;
  for (Eigen::Index start = 0; start < a.rows(); start += kRowBlock) {
    const Eigen::Index len = std::min(kRowBlock, a.rows() - start);
    const Matrix r = a.middleRows(start, len) - s.middleRows(start, len) * d;
    for (Eigen::Index i = 0; i < len; ++i) {
      const double mass = r.row(i).cwiseMax(0.0).squaredNorm();
      if (mass > best_mass) {
        best_mass = mass;
        best_row = start + i;
      }
    }
  }
  if (best_row < 0) return false;
  const Eigen::RowVectorXd direction =
      (a.row(best_row) - s.row(best_row) * d).cwiseMax(0.0);
  // Residual projected on the new direction, computed while row k is zero.
  const Eigen::VectorXd projection =
      a * direction.transpose() - s * (d * direction.transpose());
  d.row(k) = direction;
  s.col(k) = (projection / best_mass).cwiseMax(0.0);
  return true;
}

bool Converged(double previous, double current, double rel_tol) {
  if (current == 0.0) return true;
  if (previous <= 0.0) return false;
  return (previous - current) / previous < rel_tol;
}

}  // namespace

bool operator==(const ReducerModel& a, const ReducerModel& b) {
  return a.dictionary.rows() == b.dictionary.rows() &&
         a.dictionary.cols() == b.dictionary.cols() &&
         a.dictionary == b.dictionary && a.fit_residual == b.fit_residual &&
         a.iterations_run == b.iterations_run && a.seed == b.seed;
}

Matrix Flatten(const FeatureMapBatch& batch) {
  const Shape4& shape = batch.tensor.shape();
  const auto data = batch.tensor.data();
  Matrix a(static_cast<Eigen::Index>(shape.n * shape.h * shape.w),
           static_cast<Eigen::Index>(shape.c));
  // Row-major storage makes the flat tensor and the matrix share an order.
  std::copy(data.begin(), data.end(), a.data());
  return a;
}

FeatureMapBatch Unflatten(const Matrix& flat, const Shape4& shape,
                          std::vector<ImageId> image_ids) {
  if (static_cast<std::size_t>(flat.rows()) != shape.n * shape.h * shape.w ||
      static_cast<std::size_t>(flat.cols()) != shape.c) {
    Fail(ErrorCode::kShapeMismatch,
         "matrix " + Dims(flat) + " cannot be reshaped to " + shape.ToString());
  }
  std::vector<float> values(flat.size());
  std::transform(flat.data(), flat.data() + flat.size(), values.begin(),
                 [](double v) { return static_cast<float>(v); });
  return FeatureMapBatch{Tensor4<float>(shape, std::move(values)),
                         std::move(image_ids)};
}

double Residual(const Matrix& a, const Matrix& s, const Matrix& d) {
  if (s.rows() != a.rows() || d.cols() != a.cols() || s.cols() != d.rows()) {
    Fail(ErrorCode::kShapeMismatch, "residual of A " + Dims(a) + " with S " +
                                        Dims(s) + " and D " + Dims(d));
  }
  const double norm = a.norm();
  if (norm == 0.0) {
    Fail(ErrorCode::kZeroMatrix, "relative residual undefined for zero A");
  }
  return Objective(a, s, d) / norm;
}

NmfFit FitNmf(const Matrix& a, const NmfOptions& options) {
  CheckNonNegative(a);
  CheckIterationOptions(options.max_iters, options.rel_tol);
  if (options.rank < 1) {
    Fail(ErrorCode::kInvalidArgument, "rank must be >= 1");
  }
  const auto max_rank =
      static_cast<std::size_t>(std::min(a.rows(), a.cols()));
  if (options.rank > max_rank) {
    Fail(ErrorCode::kRankTooLarge,
         "rank " + std::to_string(options.rank) + " exceeds min dimension of " +
             Dims(a));
  }
  if (a.norm() == 0.0) {
    Fail(ErrorCode::kZeroMatrix, "cannot factorize an all-zero matrix");
  }

  const auto rank = static_cast<Eigen::Index>(options.rank);
  std::mt19937_64 rng(options.seed);
  const double scale = InitScale(a, options.rank);
  Matrix s = SeededFactor(rng, a.rows(), rank, scale);
  Matrix d = SeededFactor(rng, rank, a.cols(), scale);

  NmfFit fit;
  NmfDiagnostics& diag = fit.diagnostics;
  std::vector<int> reseed_count(options.rank, 0);
  double objective = Objective(a, s, d);
  diag.objective_history.push_back(objective);

  int iterations = 0;
  while (iterations < options.max_iters) {
    UpdateScores(a, d, s, kMaxInnerUpdates);
    UpdateDictionary(a, s, d);
    for (Eigen::Index k = 0; k < rank; ++k) {
      if (!d.row(k).isZero(0.0)) continue;
      // 0: never collapsed, 1: re-seeded once, 2: flagged dead.
      const auto concept_index = static_cast<std::size_t>(k);
      int& state = reseed_count[concept_index];
      if (state == 0 && ReseedConcept(a, s, d, k)) {
        diag.reseeded_concepts.push_back(concept_index);
        state = 1;
      } else if (state < 2) {
        diag.dead_concepts.push_back(concept_index);
        state = 2;
      }
    }
    ++iterations;
    const double previous = objective;
    objective = Objective(a, s, d);
    diag.objective_history.push_back(objective);
    if (Converged(previous, objective, options.rel_tol)) {
      diag.converged = true;
      break;
    }
  }

  fit.model.dictionary = d.cast<float>();
  fit.model.iterations_run = static_cast<std::uint32_t>(iterations);
  fit.model.seed = options.seed;
  fit.model.fit_residual = static_cast<float>(
      Residual(a, s, fit.model.dictionary.cast<double>()));
  fit.scores = std::move(s);
  return fit;
}

NmfFit FitReducer(const FeatureMapBatch& batch, const NmfOptions& options) {
  return FitNmf(Flatten(batch), options);
}

Matrix InferScores(const Matrix& a, const ReducerModel& model,
                   const InferenceOptions& options,
                   NmfDiagnostics* diagnostics) {
  if (static_cast<std::size_t>(a.cols()) != model.channels()) {
    Fail(ErrorCode::kChannelMismatch,
         "input has " + std::to_string(a.cols()) + " channels, model expects " +
             std::to_string(model.channels()));
  }
  if (model.rank() < 1) {
    Fail(ErrorCode::kInvalidArgument, "model has an empty dictionary");
  }
  CheckNonNegative(a);
  CheckIterationOptions(options.max_iters, options.rel_tol);

  const Matrix d = model.dictionary.cast<double>();
  // Same seeded stream as FitNmf draws S from first, so the training batch
  // starts from the same point it was fitted from.
  std::mt19937_64 rng(model.seed);
  Matrix s = SeededFactor(rng, a.rows(), d.rows(), InitScale(a, model.rank()));

  NmfDiagnostics local;
  NmfDiagnostics& diag = diagnostics != nullptr ? *diagnostics : local;
  diag = NmfDiagnostics{};
  double objective = Objective(a, s, d);
  diag.objective_history.push_back(objective);
  for (int it = 0; it < options.max_iters; ++it) {
    UpdateScores(a, d, s, 1);
    const double previous = objective;
    objective = Objective(a, s, d);
    diag.objective_history.push_back(objective);
    if (Converged(previous, objective, options.rel_tol)) {
      diag.converged = true;
      break;
    }
  }
  return s;
}

SpatialConceptMap Transform(const FeatureMapBatch& batch,
                            const ReducerModel& model,
                            const InferenceOptions& options) {
  const Shape4& shape = batch.tensor.shape();
  if (shape.c != model.channels()) {
    Fail(ErrorCode::kChannelMismatch,
         "batch has " + std::to_string(shape.c) + " channels, model expects " +
             std::to_string(model.channels()));
  }
  const Matrix s = InferScores(Flatten(batch), model, options);
  const Shape4 out_shape{shape.n, shape.h, shape.w, model.rank()};
  std::vector<double> values(s.data(), s.data() + s.size());
  return SpatialConceptMap{Tensor4<double>(out_shape, std::move(values)),
                           batch.image_ids};
}

FeatureMapBatch InverseTransform(const SpatialConceptMap& scores,
                                 const ReducerModel& model) {
  const Shape4& shape = scores.tensor.shape();
  if (shape.c != model.rank()) {
    Fail(ErrorCode::kRankMismatch,
         "score map has " + std::to_string(shape.c) +
             " concepts, model has " + std::to_string(model.rank()));
  }
  const auto rows = static_cast<Eigen::Index>(shape.n * shape.h * shape.w);
  const auto data = scores.tensor.data();
  const Eigen::Map<const Matrix> s(data.data(), rows,
                                   static_cast<Eigen::Index>(shape.c));
  const Matrix reconstructed = s * model.dictionary.cast<double>();
  return Unflatten(reconstructed,
                   Shape4{shape.n, shape.h, shape.w, model.channels()},
                   scores.image_ids);
}

}  // namespace ncav::reducer
