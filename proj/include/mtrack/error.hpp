#pragma once

#include <stdexcept>
#include <string>

namespace mtrack {

enum class Errc {
  IoError,
  UnsupportedFormat,
  MalformedFile,
  InvalidParam,
  EmptyInput,
  DimensionMismatch,
  OutOfBounds,
  RangeMismatch,
  InsufficientHistory,
  EmptyPath,
  DomainMismatch,
  BeatCountMismatch,
  SocketError,
};

const char* to_string(Errc code) noexcept;

// All library failures are reported through this exception type; the code
// identifies the failure class so callers (and the CLI exit-code mapping) can
// branch on it without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace mtrack
