#pragma once

#include <stdexcept>
#include <string>

namespace biasaudit {

enum class ErrorCode {
  InvalidArgument,
  Io,
  Parse,
  MissingFixture,
  Network,
  Backend,
  MissingArtifact,
  ConfigConflict,
};

/// Base exception for every failure raised by the library. The code is what
/// crosses the C boundary; the message is kept for diagnostics.
class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

private:
  ErrorCode code_;
};

class MissingFixture : public Error {
public:
  explicit MissingFixture(const std::string& hash)
      : Error(ErrorCode::MissingFixture, "missing replay fixture for prompt hash " + hash),
        hash_(hash) {}

  const std::string& hash() const noexcept { return hash_; }

private:
  std::string hash_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace biasaudit
