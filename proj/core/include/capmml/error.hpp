#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace capmml {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file. Carries the location of the offending cell.
class ParseError : public Error {
 public:
  ParseError(std::string file, std::size_t line, std::string column, const std::string& what);

  const std::string& file() const noexcept { return file_; }
  std::size_t line() const noexcept { return line_; }
  const std::string& column() const noexcept { return column_; }

 private:
  std::string file_;
  std::size_t line_;
  std::string column_;
};

/// A well-formed input that violates a data invariant.
class ValidationError : public Error {
 public:
  ValidationError(const std::string& what, std::vector<std::string> offenders);

  const std::vector<std::string>& offenders() const noexcept { return offenders_; }

 private:
  std::vector<std::string> offenders_;
};

/// Invalid configuration or arguments (bad hyperparameters, bad search spaces).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure during training (divergence, zero variance).
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace capmml
