#pragma once

#include <stdexcept>
#include <string>

namespace darksight {

// Base class for all toolkit errors. The CLI maps subtypes onto exit
// codes: ShapeError/ValueError/IoError -> 1, NumericError -> 2.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor extents or layouts do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// An argument is outside its documented domain.
class ValueError : public Error {
 public:
  using Error::Error;
};

// File or stream level failure; the message names the offending path.
class IoError : public Error {
 public:
  using Error::Error;
};

// A value that must be finite is NaN/Inf, or a numeric check failed.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace darksight
