#pragma once

#include <stdexcept>
#include <string>

namespace kinefit {

enum class ErrorKind {
  Parse,        // malformed input file
  Validation,   // structurally valid input violating a model invariant
  Dimension,    // mismatched sizes between arguments
  Degenerate,   // geometrically or numerically degenerate configuration
  Numeric,      // failed numerical procedure (non-convergence, exhaustion)
  Io,           // filesystem problem
  Usage,        // bad argument at the API/CLI boundary
};

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace kinefit
