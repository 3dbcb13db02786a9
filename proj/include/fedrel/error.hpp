#pragma once

#include <stdexcept>
#include <string>

namespace fedrel {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Dimension / rank mismatch in a tensor operation.
struct ShapeError : Error {
  using Error::Error;
};

/// Non-finite values or invalid numeric arguments.
struct NumericError : Error {
  using Error::Error;
};

/// File container problems (magic, truncation, dimension mismatch).
struct IoError : Error {
  using Error::Error;
};

/// Experiment configuration problems (unknown key, bad type, missing key).
struct ConfigError : Error {
  using Error::Error;
};

}  // namespace fedrel
