#include "roomgraph/error.hpp"

namespace roomgraph {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kMalformedJson: return "MalformedJson";
    case ErrorCode::kUnknownRelation: return "UnknownRelation";
    case ErrorCode::kNonRootTopLevelKey: return "NonRootTopLevelKey";
    case ErrorCode::kDuplicateLabel: return "DuplicateLabel";
    case ErrorCode::kMalformedGraph: return "MalformedGraph";
    case ErrorCode::kEmptyBatch: return "EmptyBatch";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kTooFewPoints: return "TooFewPoints";
    case ErrorCode::kTooFewObjects: return "TooFewObjects";
    case ErrorCode::kTransport: return "Transport";
    case ErrorCode::kSchemaViolation: return "SchemaViolation";
    case ErrorCode::kBackendRefusal: return "BackendRefusal";
    case ErrorCode::kUnparseable: return "Unparseable";
    case ErrorCode::kUnmatchedRequest: return "UnmatchedRequest";
    case ErrorCode::kBackendFailure: return "BackendFailure";
    case ErrorCode::kMissingPromptScore: return "MissingPromptScore";
    case ErrorCode::kDuplicateImage: return "DuplicateImage";
    case ErrorCode::kStaleBase: return "StaleBase";
    case ErrorCode::kInvalidEdit: return "InvalidEdit";
    case ErrorCode::kUnknownScene: return "UnknownScene";
    case ErrorCode::kInvalidTransition: return "InvalidTransition";
    case ErrorCode::kIo: return "Io";
    case ErrorCode::kConfig: return "Config";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& detail)
    : std::runtime_error(std::string(error_code_name(code)) + ": " + detail),
      code_(code),
      detail_(detail) {}

}  // namespace roomgraph
