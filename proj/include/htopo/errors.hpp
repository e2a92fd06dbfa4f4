#pragma once

#include <stdexcept>
#include <string>

namespace htopo {

/// Bad user input: configuration values, files, or CLI arguments.
/// Carries the dotted key path (or file:line) the problem refers to.
class ValidationError : public std::invalid_argument {
 public:
  ValidationError(std::string where, const std::string& what)
      : std::invalid_argument(where.empty() ? what : where + ": " + what), where_(std::move(where)) {}

  const std::string& where() const noexcept { return where_; }

 private:
  std::string where_;
};

/// Failure inside a numerical kernel (breakdown, singular factorization, non-finite values).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace htopo
