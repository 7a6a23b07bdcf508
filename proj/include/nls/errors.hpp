#pragma once

#include <stdexcept>
#include <string>

namespace nls {

/// Invalid or incomplete experiment configuration. Maps to CLI exit code 2.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Solver breakdown, non-finite values, failed factorizations. Maps to CLI exit code 3.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace nls
