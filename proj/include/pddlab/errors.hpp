#pragma once

#include <stdexcept>
#include <string>

namespace pddlab {

// Process exit codes shared by the CLI and the tests that drive it.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 2,     // usage, config, or artifact error
  kExitPoisoned = 3,  // strict-mode detect found a poisoned input
  kExitNumeric = 4,   // numerical abort (non-finite loss, degenerate input)
};

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad tensor shapes: empty, zero dims, or mismatched operands.
struct ShapeError : Error {
  using Error::Error;
};

// Malformed files. offset is the byte position of the problem when known.
struct FormatError : Error {
  long long offset;
  explicit FormatError(const std::string& msg, long long off = -1)
      : Error(off >= 0 ? msg + " (byte offset " + std::to_string(off) + ")" : msg),
        offset(off) {}
};

// Invalid configuration: unknown keys, bad values, missing artifacts.
struct ConfigError : Error {
  using Error::Error;
};

// Degenerate or non-finite numerics.
struct NumericError : Error {
  using Error::Error;
};

}  // namespace pddlab
