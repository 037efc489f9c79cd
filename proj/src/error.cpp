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

#include "ncav/error.hpp"

namespace ncav {

std::string_view ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kIo: return "IoError";
    case ErrorCode::kMalformedManifest: return "MalformedManifest";
    case ErrorCode::kMissingFile: return "MissingFile";
    case ErrorCode::kNegativeActivation: return "NegativeActivation";
    case ErrorCode::kNonFinite: return "NonFinite";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kMalformedArtifact: return "MalformedArtifact";
    case ErrorCode::kNonNegativeViolation: return "NonNegativeViolation";
    case ErrorCode::kRankTooLarge: return "RankTooLarge";
    case ErrorCode::kZeroMatrix: return "ZeroMatrix";
    case ErrorCode::kChannelMismatch: return "ChannelMismatch";
    case ErrorCode::kRankMismatch: return "RankMismatch";
    case ErrorCode::kConceptOutOfRange: return "ConceptOutOfRange";
    case ErrorCode::kIndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::kEmptyTrainingSet: return "EmptyTrainingSet";
    case ErrorCode::kFeatureCountMismatch: return "FeatureCountMismatch";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kKTooLarge: return "KTooLarge";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(ErrorCodeName(code)) + ": " + message),
      code_(code) {}

void Fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace ncav
