#pragma once

#include <stdexcept>
#include <string>

namespace xvd {

enum class ErrorKind {
  InvalidRate,
  PointOutOfFrame,
  NoPositivePrompt,
  InvalidArgument,
  InsufficientPoints,
  InsufficientExemplars,
  InsufficientCandidates,
  Retryable,
  LengthMismatch,
  MissingAnswerToken,
  NoPrecedingState,
  InvalidCorpus,
  Unserializable,
  UndefinedMetric,
  Malformed,
  NotFound,
  Conflict,
  Rejected,
  Io,
};

const char* error_kind_name(ErrorKind kind);

struct Error : public std::runtime_error {
  ErrorKind kind;
  Error(ErrorKind kind_, const std::string& message)
      : std::runtime_error(std::string(error_kind_name(kind_)) + ": " + message), kind(kind_) {}
};

}  // namespace xvd
