#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace iotflow {

/// Bad input data: malformed CSV rows, series too short, unknown company.
/// The CLI maps it to exit code 2.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A malformed CSV row; carries the 1-based line number.
class ParseError : public DataError {
 public:
  ParseError(std::size_t line, const std::string& what)
      : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Tensor shape disagreement between layers or between prediction and target.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace iotflow
