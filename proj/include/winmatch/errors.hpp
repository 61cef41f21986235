#pragma once

#include <stdexcept>
#include <string>

namespace winmatch {

// Operand shapes disagree (matmul inner dims, elementwise mismatch, ...).
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Extents do not tile into the requested window / block layout.
struct PartitionError : ShapeError {
  using ShapeError::ShapeError;
};

// A user-facing parameter is out of range or malformed.
struct ParamError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// An internal precondition was violated by the caller.
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

// A computation produced (or would produce) non-finite values.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// File or stream I/O failed; the message carries the path.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace winmatch
