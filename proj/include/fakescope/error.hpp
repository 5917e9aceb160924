#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fakescope {

enum class ErrorCode {
  InvalidRole,
  IndexOutOfRange,
  Precondition,
  Network,
  Auth,
  MalformedResponse,
  ScriptMiss,
  Decode,
  CropOutOfBounds,
  MissingExemplars,
  EmptySubject,
  WrongArity,
  AllStrategiesFailed,
  RemoteProvider,
  Parse,
  DuplicateId,
  MissingLabel,
  MissingTruth,
  Config,
  Io,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

  // Retryable errors are transient transport failures (timeouts, 429, 5xx).
  bool retryable() const noexcept { return code_ == ErrorCode::Network; }

 private:
  ErrorCode code_;
};

}  // namespace fakescope
