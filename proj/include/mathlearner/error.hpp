#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mathlearner {

enum class ErrorCode {
  InvalidArgument,
  MissingField,
  NoBoxedAnswer,
  NotEnoughProblems,
  UnboundPlaceholder,
  BackendUnavailable,
  RateLimited,
  EmptyCompletion,
  ScriptExhausted,
  UnscriptedRequest,
  UnparseableModelOutput,
  CyclicSketch,
  VerificationExhausted,
  ExecutorUnavailable,
  RunnerSpawnFailure,
  UnscriptedSource,
  DimensionMismatch,
  EmbedderMismatch,
  DuplicateRecord,
  StorageFailure,
  FormatVersionUnsupported,
  ChecksumMismatch,
  StoreUnavailable,
  MismatchedUniverse,
};

std::string_view to_string(ErrorCode code);

/// All library failures surface as this exception; callers dispatch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::MissingField: return "MissingField";
    case ErrorCode::NoBoxedAnswer: return "NoBoxedAnswer";
    case ErrorCode::NotEnoughProblems: return "NotEnoughProblems";
    case ErrorCode::UnboundPlaceholder: return "UnboundPlaceholder";
    case ErrorCode::BackendUnavailable: return "BackendUnavailable";
    case ErrorCode::RateLimited: return "RateLimited";
    case ErrorCode::EmptyCompletion: return "EmptyCompletion";
    case ErrorCode::ScriptExhausted: return "ScriptExhausted";
    case ErrorCode::UnscriptedRequest: return "UnscriptedRequest";
    case ErrorCode::UnparseableModelOutput: return "UnparseableModelOutput";
    case ErrorCode::CyclicSketch: return "CyclicSketch";
    case ErrorCode::VerificationExhausted: return "VerificationExhausted";
    case ErrorCode::ExecutorUnavailable: return "ExecutorUnavailable";
    case ErrorCode::RunnerSpawnFailure: return "RunnerSpawnFailure";
    case ErrorCode::UnscriptedSource: return "UnscriptedSource";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::EmbedderMismatch: return "EmbedderMismatch";
    case ErrorCode::DuplicateRecord: return "DuplicateRecord";
    case ErrorCode::StorageFailure: return "StorageFailure";
    case ErrorCode::FormatVersionUnsupported: return "FormatVersionUnsupported";
    case ErrorCode::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::StoreUnavailable: return "StoreUnavailable";
    case ErrorCode::MismatchedUniverse: return "MismatchedUniverse";
  }
  return "Unknown";
}

}  // namespace mathlearner
