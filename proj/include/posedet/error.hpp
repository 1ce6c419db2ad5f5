/* Copyright 2026 The posedet Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace posedet {

enum class ErrorKind {
  InvalidBox,
  InvalidArgument,
  NonFiniteInput,
  TooFewSamples,
  NoCandidates,
  MissingJoint,
  MissingPose,
  EmptyClass,
  DimensionMismatch,
  EmptyValidation,
  MissingModel,
  AlignmentError,
  UnknownLabel,
  UnknownJoint,
  AllUndefined,
  MissingFile,
  NumericalFailure,
  FormatError,
  VersionMismatch,
};

inline std::string_view kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidBox: return "InvalidBox";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::NonFiniteInput: return "NonFiniteInput";
    case ErrorKind::TooFewSamples: return "TooFewSamples";
    case ErrorKind::NoCandidates: return "NoCandidates";
    case ErrorKind::MissingJoint: return "MissingJoint";
    case ErrorKind::MissingPose: return "MissingPose";
    case ErrorKind::EmptyClass: return "EmptyClass";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::EmptyValidation: return "EmptyValidation";
    case ErrorKind::MissingModel: return "MissingModel";
    case ErrorKind::AlignmentError: return "AlignmentError";
    case ErrorKind::UnknownLabel: return "UnknownLabel";
    case ErrorKind::UnknownJoint: return "UnknownJoint";
    case ErrorKind::AllUndefined: return "AllUndefined";
    case ErrorKind::MissingFile: return "MissingFile";
    case ErrorKind::NumericalFailure: return "NumericalFailure";
    case ErrorKind::FormatError: return "FormatError";
    case ErrorKind::VersionMismatch: return "VersionMismatch";
  }
  return "Unknown";
}

// Process exit code for a failure of this kind: 2 input validation,
// 3 numerical failure, 4 format/version mismatch.
inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NumericalFailure:
    case ErrorKind::AllUndefined:
      return 3;
    case ErrorKind::FormatError:
    case ErrorKind::VersionMismatch:
      return 4;
    default:
      return 2;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(kind_name(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace posedet
