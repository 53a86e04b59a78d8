#pragma once

#include <stdexcept>
#include <string>

namespace treelso {

// Error taxonomy mirrored by the CLI exit codes:
// InvalidInput -> 1, IoError/ParseError -> 2, NumericalError -> 3.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidInput : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

struct ParseError : IoError {
  using IoError::IoError;
};

struct NumericalError : Error {
  using Error::Error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw InvalidInput(msg);
}

}  // namespace treelso
