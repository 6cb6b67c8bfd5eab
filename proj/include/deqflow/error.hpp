// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace deqflow {

enum class ErrorKind {
  Format,       // malformed file contents
  Unsupported,  // well-formed but outside what we accept
  Size,         // too short / too few frames
  Parameter,    // invalid configuration value
  Domain,       // argument outside the mathematical domain
  Numeric,      // non-finite value or non-convergence
  State,        // object used before it was initialized
  Shape,        // tensor shape mismatch
  Input,        // missing or empty input data
  IO,           // filesystem failure
  Load,         // checkpoint incompatible with configuration
  Usage,        // command-line misuse
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace deqflow
