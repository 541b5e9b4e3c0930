#pragma once

#include <stdexcept>
#include <string>

namespace cp {

// Every recoverable failure in the library surfaces as cp::Error; the CLI
// turns it into a one-line message and a nonzero exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace cp
