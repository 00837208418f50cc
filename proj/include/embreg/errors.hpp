#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace embreg {

// Bad flags, missing arguments, invalid configuration.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input files.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite values, degenerate geometry, failed numeric contracts.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NearZeroNorm : NumericError {
  using NumericError::NumericError;
};

// A parse failure pinned to a line of an input file.
struct ParseError : DataError {
  ParseError(const std::string& file, std::size_t line, const std::string& what)
      : DataError(file + ":" + std::to_string(line) + ": " + what), line_number(line) {}
  std::size_t line_number;
};

}  // namespace embreg
