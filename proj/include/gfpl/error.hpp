// Copyright 2026 The Group-Fair-PL Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gfpl {

enum class Errc {
  kInfeasible,
  kGroupTooSmall,
  kLengthMismatch,
  kShapeMismatch,
  kParseError,
  kMissingGroup,
  kInconsistentFeatureDim,
  kEmptyDataset,
  kTooFewQueries,
  kEmptyPool,
  kSlotsExceedPool,
  kItemNotInPool,
  kDuplicateItem,
  kTooLarge,
  kExhausted,
  kDimMismatch,
  kNonFiniteLoss,
  kConstructionFailure,
  kUnknownQuery,
  kIncompatibleCheckpoint,
  kInvalidArgument,
  kIo,
};

constexpr std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::kInfeasible: return "Infeasible";
    case Errc::kGroupTooSmall: return "GroupTooSmall";
    case Errc::kLengthMismatch: return "LengthMismatch";
    case Errc::kShapeMismatch: return "ShapeMismatch";
    case Errc::kParseError: return "ParseError";
    case Errc::kMissingGroup: return "MissingGroup";
    case Errc::kInconsistentFeatureDim: return "InconsistentFeatureDim";
    case Errc::kEmptyDataset: return "EmptyDataset";
    case Errc::kTooFewQueries: return "TooFewQueries";
    case Errc::kEmptyPool: return "EmptyPool";
    case Errc::kSlotsExceedPool: return "SlotsExceedPool";
    case Errc::kItemNotInPool: return "ItemNotInPool";
    case Errc::kDuplicateItem: return "DuplicateItem";
    case Errc::kTooLarge: return "TooLarge";
    case Errc::kExhausted: return "Exhausted";
    case Errc::kDimMismatch: return "DimMismatch";
    case Errc::kNonFiniteLoss: return "NonFiniteLoss";
    case Errc::kConstructionFailure: return "ConstructionFailure";
    case Errc::kUnknownQuery: return "UnknownQuery";
    case Errc::kIncompatibleCheckpoint: return "IncompatibleCheckpoint";
    case Errc::kInvalidArgument: return "InvalidArgument";
    case Errc::kIo: return "Io";
  }
  return "Unknown";
}

// Every failure in the library is reported as an Error carrying a code, so
// callers (and tests) can branch on the kind without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

inline void require(bool condition, Errc code, const std::string& what) {
  if (!condition) fail(code, what);
}

}  // namespace gfpl
