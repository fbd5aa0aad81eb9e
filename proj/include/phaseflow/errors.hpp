#pragma once

#include <stdexcept>
#include <string>

namespace phaseflow {

/// Invalid argument: bad dimension, empty subset, out-of-range parameter.
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// An object was used before it reached the required state (e.g. unobserved ensemble).
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace phaseflow
