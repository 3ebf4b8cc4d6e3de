#pragma once

#include <stdexcept>
#include <string>

namespace vtdtsn {

// Array shapes that do not fit together.
class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid hyperparameter, option, or config file content.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or truncated binary file.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Archive whose manifest does not match the model it is loaded into.
class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input for which a metric is undefined (zero norm, too few samples).
class DegenerateInputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite values met during evaluation or training.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace vtdtsn
