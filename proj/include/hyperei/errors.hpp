#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hei {

// Error taxonomy. The CLI maps these onto process exit codes:
//   ConfigError / FormatError / ShapeError / CapacityError -> 2
//   DivergedError                                          -> 3
//   IoError                                                -> 4
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid user-supplied configuration or malformed request.
struct ConfigError : Error {
  using Error::Error;
};

// Malformed file contents; `offset` is the byte position of the defect.
struct FormatError : Error {
  std::size_t offset;
  FormatError(const std::string& msg, std::size_t off)
      : Error(msg + " (byte offset " + std::to_string(off) + ")"), offset(off) {}
};

// Dimension disagreement between values that must be conformable.
struct ShapeError : ConfigError {
  using ConfigError::ConfigError;
};

// A brute-force oracle was asked for more than its size guard allows.
struct CapacityError : ConfigError {
  using ConfigError::ConfigError;
};

// Input is degenerate for the requested operation (e.g. constant cube).
struct DegenerateInputError : ConfigError {
  using ConfigError::ConfigError;
};

// Filesystem failure (unwritable path, short write, ...).
struct IoError : Error {
  using Error::Error;
};

// Training produced a non-finite loss; `iteration` is the failing step.
struct DivergedError : Error {
  long iteration;
  DivergedError(long it)
      : Error("training diverged: non-finite loss at iteration " + std::to_string(it)),
        iteration(it) {}
};

// API misuse that corrupted or would corrupt internal state.
struct StateError : Error {
  using Error::Error;
};

}  // namespace hei
