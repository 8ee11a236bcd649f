// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The claimscope Authors

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace claimscope {

enum class ErrorCode {
  kInvalidArgument,
  kEmptyDocument,
  kAlignmentGap,
  kOffsetOutOfBounds,
  kDocumentTooLong,
  kDocumentMismatch,
  kBackendUnavailable,
  kIOFailure,
  kUnsupportedVersion,
  kCorruptFile,
  kInvalidAttention,
  kInfeasiblePattern,
  kDimensionMismatch,
  kIndexOutOfRange,
  kSelfPair,
  kTextTooLong,
  kStaleCache,
};

// Pipeline stage an error surfaced from. kNone for errors raised outside an
// orchestrated analysis.
enum class Stage { kNone, kSegmentation, kAttention, kSaliency, kNli };

std::string_view to_string(ErrorCode code);
std::string_view to_string(Stage stage);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, Stage stage = Stage::kNone)
      : std::runtime_error(message), code_(code), stage_(stage) {}

  ErrorCode code() const { return code_; }
  Stage stage() const { return stage_; }

  Error with_stage(Stage stage) const { return Error(code_, what(), stage); }

 private:
  ErrorCode code_;
  Stage stage_;
};

}  // namespace claimscope
