// Shared error types and small utilities used across the library.
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace meshtex {

// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed text input (OBJ records, config lines). Carries a line number
// in the message where one is known.
struct ParseError : Error {
  using Error::Error;
};

// Invalid or inconsistent data: bad files, index out of range, empty mesh,
// mismatched tensor shapes coming from disk.
struct DataError : Error {
  using Error::Error;
};

// Tensor shape mismatch in an operation.
struct ShapeError : Error {
  using Error::Error;
};

// Invalid configuration or command-line usage.
struct ConfigError : Error {
  using Error::Error;
};

// Non-finite values produced by a numeric operation.
struct NumericalError : Error {
  using Error::Error;
};

// Exit codes used by the CLI, shared here so tests can assert on them.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitData = 2,
  kExitNumerical = 3,
};

}  // namespace meshtex
