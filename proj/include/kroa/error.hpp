#pragma once

#include <stdexcept>
#include <string>

namespace kroa {

/// Malformed input: bad arguments, shape mismatches, corrupt files.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A computation produced non-finite values or lost rank.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The analysis ran but found nothing usable (no fixed points, no classifier,
/// empty contour).
class EmptyResult : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace kroa
