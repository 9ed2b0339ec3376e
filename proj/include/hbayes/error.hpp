#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hbayes {

// Bad arguments or inconsistent inputs supplied by the caller.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A numerical routine could not produce a finite / positive-definite result.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A loaded object violates one of its invariants.
class InvariantError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace hbayes
