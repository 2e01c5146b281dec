#pragma once

#include <stdexcept>
#include <string>

namespace slimfair {

// Error taxonomy shared by every module. Each type maps to one failure class
// so callers (and the CLI exit-code mapping) can branch on the type alone.

struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct RangeError : std::out_of_range {
  using std::out_of_range::out_of_range;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct SpecError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct FeasibilityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CapacityError : std::length_error {
  using std::length_error::length_error;
};

struct DegenerateError : std::domain_error {
  using std::domain_error::domain_error;
};

struct ArgumentError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

}  // namespace slimfair
