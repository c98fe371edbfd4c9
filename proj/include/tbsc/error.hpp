#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tbsc {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad arguments or violated preconditions.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// File could not be opened, read or written.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Input file lacks a declared column.
class SchemaError : public Error {
 public:
  explicit SchemaError(const std::string& column)
      : Error("schema error: missing column '" + column + "'"), column_(column) {}
  const std::string& column() const noexcept { return column_; }

 private:
  std::string column_;
};

/// A row of an input file could not be parsed.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Series of different lengths, or unknown unit names.
class AlignmentError : public Error {
 public:
  using Error::Error;
};

/// A model was trained on periods it is now asked to impute.
class LeakageError : public Error {
 public:
  using Error::Error;
};

/// Iterative solver produced a non-finite objective.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace tbsc
