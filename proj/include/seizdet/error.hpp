#pragma once

#include <stdexcept>
#include <string>

namespace seizdet {

// Base for every contract or data error raised by the library. The CLI maps
// these to exit status 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file. The message names the source and line.
class IngestError : public Error {
 public:
  IngestError(const std::string& source, std::size_t line, const std::string& what)
      : Error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Violated precondition on in-memory data (shapes, ranges, class balance...).
class ContractError : public Error {
 public:
  using Error::Error;
};

}  // namespace seizdet
