#pragma once

#include <stdexcept>
#include <string>

namespace pcmorph {

// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed input file. Message carries the 1-based line number when known.
struct ParseError : Error {
  using Error::Error;
};

// Contract violation on an argument (bad shape, out-of-range value, ...).
struct InvalidArgument : Error {
  using Error::Error;
};

// Non-finite value produced where finiteness is required.
struct NumericalError : Error {
  using Error::Error;
};

// Filesystem-level failure (missing file, short read, unwritable path).
struct IoError : Error {
  using Error::Error;
};

}  // namespace pcmorph
