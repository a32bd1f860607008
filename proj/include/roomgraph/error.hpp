#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace roomgraph {

enum class ErrorCode {
  kMalformedJson,
  kUnknownRelation,
  kNonRootTopLevelKey,
  kDuplicateLabel,
  kMalformedGraph,
  kEmptyBatch,
  kInvalidArgument,
  kDimensionMismatch,
  kTooFewPoints,
  kTooFewObjects,
  kTransport,
  kSchemaViolation,
  kBackendRefusal,
  kUnparseable,
  kUnmatchedRequest,
  kBackendFailure,
  kMissingPromptScore,
  kDuplicateImage,
  kStaleBase,
  kInvalidEdit,
  kUnknownScene,
  kInvalidTransition,
  kIo,
  kConfig,
};

std::string_view error_code_name(ErrorCode code);

// Every failure raised by the library carries a machine-readable code; the
// message holds the human-readable detail (offending label, fingerprint...).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail);

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace roomgraph
