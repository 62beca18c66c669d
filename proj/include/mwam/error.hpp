#pragma once

#include <stdexcept>
#include <string>

namespace mwam {

/// Rejected input: bad dimensions, out-of-range parameters, malformed files.
/// The CLI maps it to exit code 2.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Inconsistent run configuration (missing keys, incompatible options).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite loss or unstable numerics during a run. Exit code 3.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw InputError(what);
}

}  // namespace mwam
