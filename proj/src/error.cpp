#include "fuselearn/error.hpp"

namespace fuselearn {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::Io: return "Io";
    case ErrorCode::MalformedLine: return "MalformedLine";
    case ErrorCode::EmotionNotSimplex: return "EmotionNotSimplex";
    case ErrorCode::PoseOutOfRange: return "PoseOutOfRange";
    case ErrorCode::OverlappingUnits: return "OverlappingUnits";
    case ErrorCode::EvalOutOfRange: return "EvalOutOfRange";
    case ErrorCode::MissingChannelFile: return "MissingChannelFile";
    case ErrorCode::SchemaViolation: return "SchemaViolation";
    case ErrorCode::InconsistentNames: return "InconsistentNames";
    case ErrorCode::RowMismatch: return "RowMismatch";
    case ErrorCode::NonFiniteTarget: return "NonFiniteTarget";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::EmptySeries: return "EmptySeries";
    case ErrorCode::SeriesTooShort: return "SeriesTooShort";
    case ErrorCode::NoWindows: return "NoWindows";
    case ErrorCode::TooFewRows: return "TooFewRows";
    case ErrorCode::ZeroVarianceColumn: return "ZeroVarianceColumn";
    case ErrorCode::DegenerateMatrix: return "DegenerateMatrix";
    case ErrorCode::ConstantTruth: return "ConstantTruth";
    case ErrorCode::EmptyTrainingSet: return "EmptyTrainingSet";
  }
  return "Unknown";
}

ErrorCategory category_of(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::InvalidConfig:
      return ErrorCategory::Usage;
    case ErrorCode::Io:
    case ErrorCode::MalformedLine:
    case ErrorCode::EmotionNotSimplex:
    case ErrorCode::PoseOutOfRange:
    case ErrorCode::OverlappingUnits:
    case ErrorCode::EvalOutOfRange:
    case ErrorCode::MissingChannelFile:
    case ErrorCode::SchemaViolation:
    case ErrorCode::InconsistentNames:
    case ErrorCode::RowMismatch:
    case ErrorCode::NonFiniteTarget:
      return ErrorCategory::Data;
    default:
      return ErrorCategory::Numeric;
  }
}

Error::Error(ErrorCode code, const std::string& message, std::size_t line)
    : std::runtime_error(std::string(to_string(code)) + ": " + message),
      code_(code),
      line_(line) {}

}  // namespace fuselearn
