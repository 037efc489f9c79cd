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

#ifndef NCAV_ERROR_HPP_
#define NCAV_ERROR_HPP_

#include <stdexcept>
#include <string>
#include <string_view>

namespace ncav {

enum class ErrorCode {
  kInvalidArgument,
  kIo,
  // datastore
  kMalformedManifest,
  kMissingFile,
  kNegativeActivation,
  kNonFinite,
  kShapeMismatch,
  kMalformedArtifact,
  // reducer
  kNonNegativeViolation,
  kRankTooLarge,
  kZeroMatrix,
  kChannelMismatch,
  kRankMismatch,
  // scorer
  kConceptOutOfRange,
  kIndexOutOfRange,
  // surrogate
  kEmptyTrainingSet,
  kFeatureCountMismatch,
  // evaluator
  kEmptyInput,
  kLengthMismatch,
  kKTooLarge,
};

std::string_view ErrorCodeName(ErrorCode code);

// Every failure raised by the library. The code identifies the contract that
// was violated; the message carries context such as paths and shapes.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void Fail(ErrorCode code, const std::string& message);

}  // namespace ncav

#endif  // NCAV_ERROR_HPP_
