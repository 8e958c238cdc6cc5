#pragma once

#include <stdexcept>
#include <string>

namespace socnav {

enum class ErrorCode {
  InvalidArgument,
  CoincidentObstacle,
  SamplingExhausted,
  LengthMismatch,
  InsufficientPoints,
  Io,
  MalformedRecord,
  EmptyContext,
  DimensionMismatch,
  VersionMismatch,
  ScenarioSetMismatch,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::CoincidentObstacle: return "CoincidentObstacle";
    case ErrorCode::SamplingExhausted: return "SamplingExhausted";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::InsufficientPoints: return "InsufficientPoints";
    case ErrorCode::Io: return "Io";
    case ErrorCode::MalformedRecord: return "MalformedRecord";
    case ErrorCode::EmptyContext: return "EmptyContext";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::ScenarioSetMismatch: return "ScenarioSetMismatch";
  }
  return "Unknown";
}

/// Library-wide exception. The code lets callers (the CLI in particular)
/// map failures onto exit statuses without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Thrown by the JSONL reader; carries the 1-based line that failed to parse.
class MalformedRecordError : public Error {
 public:
  MalformedRecordError(std::size_t line, const std::string& what)
      : Error(ErrorCode::MalformedRecord, "line " + std::to_string(line) + ": " + what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace socnav
