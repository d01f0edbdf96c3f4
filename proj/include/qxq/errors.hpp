#pragma once

#include <stdexcept>
#include <string>

namespace qxq {

// Error classes surfaced by the CLI as machine-parsable "error[<kind>]: ..." lines.
enum class ErrorKind {
  Format,     // malformed input bytes (wrong length, bad magic)
  Range,      // sample or value outside its legal interval
  Shape,      // tensor shape mismatch
  Geometry,   // image dimension constraint violated
  Config,     // invalid configuration value or combination
  Data,       // dataset-level problem (empty, unusable)
  State,      // operation called in the wrong state
  Parameter,  // bad scalar argument
  Io,         // filesystem failure
  Load,       // checkpoint/config mismatch on load
};

const char* error_kind_name(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(error_kind_name(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

}  // namespace qxq
