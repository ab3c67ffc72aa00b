#pragma once
#include <stdexcept>
#include <string>

namespace mrhom {

// Error taxonomy mirrors the CLI exit codes: validation -> 1, I/O -> 2,
// numerical failure -> 3.

class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace mrhom
