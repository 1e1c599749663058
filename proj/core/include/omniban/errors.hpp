#pragma once

#include <stdexcept>
#include <string>

namespace omniban {

/// Shape or dimension disagreement between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A softmax slice (or attention row) with no valid entries.
class MaskError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Misuse of the tape: backward on a detached or non-scalar value, foreign tapes.
class TapeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace omniban
