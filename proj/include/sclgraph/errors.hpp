#pragma once

#include <stdexcept>
#include <string>

namespace sclgraph {

/// Incompatible shapes, non-square or asymmetric inputs, malformed structure.
class StructuralError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Out-of-domain scalar arguments (bandwidth <= 0, empty masks, bad ratios).
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A loss or parameter became NaN/Inf during training.
class NumericalDivergence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Unreadable or malformed dataset / checkpoint files.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace sclgraph
