#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fuselearn {

enum class ErrorCode {
  InvalidArgument,
  InvalidConfig,
  Io,
  MalformedLine,
  EmotionNotSimplex,
  PoseOutOfRange,
  OverlappingUnits,
  EvalOutOfRange,
  MissingChannelFile,
  SchemaViolation,
  InconsistentNames,
  RowMismatch,
  NonFiniteTarget,
  DimensionMismatch,
  EmptySeries,
  SeriesTooShort,
  NoWindows,
  TooFewRows,
  ZeroVarianceColumn,
  DegenerateMatrix,
  ConstantTruth,
  EmptyTrainingSet,
};

// Coarse grouping used for process exit codes and the C API status.
enum class ErrorCategory { Usage, Data, Numeric };

const char* to_string(ErrorCode code) noexcept;
ErrorCategory category_of(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::size_t line = 0);

  ErrorCode code() const noexcept { return code_; }
  ErrorCategory category() const noexcept { return category_of(code_); }
  // 1-based source line for parse errors, 0 otherwise.
  std::size_t line() const noexcept { return line_; }

 private:
  ErrorCode code_;
  std::size_t line_;
};

}  // namespace fuselearn
