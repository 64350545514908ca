#include "deathcast/error.hpp"

namespace deathcast {

std::string_view ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kMalformedRecord: return "MalformedRecord";
    case ErrorCode::kSchemaViolation: return "SchemaViolation";
    case ErrorCode::kEmptyMatch: return "EmptyMatch";
    case ErrorCode::kSchemaMismatch: return "SchemaMismatch";
    case ErrorCode::kInvalidFrame: return "InvalidFrame";
    case ErrorCode::kEmptyStream: return "EmptyStream";
    case ErrorCode::kNonPositiveWindow: return "NonPositiveWindow";
    case ErrorCode::kChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::kInsufficientPositives: return "InsufficientPositives";
    case ErrorCode::kInvalidArchitecture: return "InvalidArchitecture";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kNonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::kVersionMismatch: return "VersionMismatch";
    case ErrorCode::kNoPositives: return "NoPositives";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kConstantInput: return "ConstantInput";
    case ErrorCode::kInvalidConfig: return "InvalidConfig";
    case ErrorCode::kForeignMatch: return "ForeignMatch";
    case ErrorCode::kSplitLeak: return "SplitLeak";
    case ErrorCode::kIo: return "Io";
  }
  return "Unknown";
}

}  // namespace deathcast
