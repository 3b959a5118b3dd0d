#pragma once

#include <stdexcept>
#include <string>

namespace medvar {

// Error taxonomy mirrored by the CLI exit codes: configuration and data
// problems exit 2, numerical failures exit 1.

// Invalid configuration: unknown flags, bad model specs, impossible options.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid or inconsistent input data: malformed files, broken invariants.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numerical failure: non-convergence, singular systems, unstable fits.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace medvar
