#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace mtqsar {

// Every failure in the library is reported as an Error carrying one of
// these codes. The code, not the message text, is the stable contract.
enum class ErrorCode {
  // smiles / molecules
  UnclosedRing,
  UnbalancedParenthesis,
  UnknownAtomSymbol,
  ValenceViolation,
  EmptyInput,
  WidthMismatch,
  // ingestion / matrices
  MalformedRow,
  UnparseableSmiles,
  EmptyTask,
  SingleClassTraining,
  InvalidSpec,
  // splitting
  TooFewRecords,
  DegenerateDates,
  FocusNotFound,
  ClassTooSmall,
  InvalidFoldCount,
  // models
  ShapeMismatch,
  NonFiniteLoss,
  SingleClass,
  // evaluation / statistics
  ScheduleMismatch,
  TaskMismatch,
  AllZero,
  InvalidCounts,
  DegenerateX,
  EmptySubset,
  // orchestration
  MissingArtifact,
  ConfigError,
  IoError,
};

inline std::string_view error_code_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::UnclosedRing: return "UnclosedRing";
    case ErrorCode::UnbalancedParenthesis: return "UnbalancedParenthesis";
    case ErrorCode::UnknownAtomSymbol: return "UnknownAtomSymbol";
    case ErrorCode::ValenceViolation: return "ValenceViolation";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::WidthMismatch: return "WidthMismatch";
    case ErrorCode::MalformedRow: return "MalformedRow";
    case ErrorCode::UnparseableSmiles: return "UnparseableSmiles";
    case ErrorCode::EmptyTask: return "EmptyTask";
    case ErrorCode::SingleClassTraining: return "SingleClassTraining";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::TooFewRecords: return "TooFewRecords";
    case ErrorCode::DegenerateDates: return "DegenerateDates";
    case ErrorCode::FocusNotFound: return "FocusNotFound";
    case ErrorCode::ClassTooSmall: return "ClassTooSmall";
    case ErrorCode::InvalidFoldCount: return "InvalidFoldCount";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::SingleClass: return "SingleClass";
    case ErrorCode::ScheduleMismatch: return "ScheduleMismatch";
    case ErrorCode::TaskMismatch: return "TaskMismatch";
    case ErrorCode::AllZero: return "AllZero";
    case ErrorCode::InvalidCounts: return "InvalidCounts";
    case ErrorCode::DegenerateX: return "DegenerateX";
    case ErrorCode::EmptySubset: return "EmptySubset";
    case ErrorCode::MissingArtifact: return "MissingArtifact";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code) {}

  // Parser errors carry the byte offset of the offending input.
  Error(ErrorCode code, std::string message, std::size_t offset)
      : std::runtime_error(std::string(error_code_name(code)) + " at offset " +
                           std::to_string(offset) + ": " + message),
        code_(code),
        offset_(offset),
        has_offset_(true) {}

  ErrorCode code() const noexcept { return code_; }
  bool has_offset() const noexcept { return has_offset_; }
  std::size_t offset() const noexcept { return offset_; }

 private:
  ErrorCode code_;
  std::size_t offset_ = 0;
  bool has_offset_ = false;
};

// Process exit codes used by the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 2,
  kExitData = 3,
  kExitNumeric = 4,
};

inline int exit_code_for(ErrorCode c) {
  switch (c) {
    case ErrorCode::InvalidSpec:
    case ErrorCode::ConfigError:
    case ErrorCode::InvalidFoldCount:
    case ErrorCode::FocusNotFound:
      return kExitConfig;
    case ErrorCode::NonFiniteLoss:
    case ErrorCode::DegenerateX:
      return kExitNumeric;
    default:
      return kExitData;
  }
}

}  // namespace mtqsar
