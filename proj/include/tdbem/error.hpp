#pragma once

#include <stdexcept>
#include <string>

namespace tdbem {

/// Bad input: malformed files, invalid parameters, inconsistent configs.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerical failure: singular pivots, unconverged quadrature or iterations.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw ValidationError(message);
}

}  // namespace tdbem
