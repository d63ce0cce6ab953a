#pragma once

#include <stdexcept>
#include <string>

namespace flowlab {

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct UnsupportedFamilyError : std::runtime_error {
  explicit UnsupportedFamilyError(const std::string& what) : std::runtime_error(what) {}
};

// Importance-sampling collapse, singular kernels and the like; carries a
// human-readable diagnostic.
struct DegeneracyError : std::runtime_error {
  explicit DegeneracyError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite state reached during integration.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace flowlab
