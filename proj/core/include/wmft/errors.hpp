#pragma once

#include <stdexcept>
#include <string>

namespace wmft {

// Base for every error raised by the library. Subclasses map onto the
// failure classes callers are expected to distinguish.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class EmptyBufferError : public Error {
 public:
  using Error::Error;
};

class PlanningError : public Error {
 public:
  using Error::Error;
};

}  // namespace wmft
