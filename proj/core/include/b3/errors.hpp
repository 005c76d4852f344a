#pragma once

#include <stdexcept>
#include <string>

namespace b3 {

/// Bad or inconsistent configuration (CLI exit code 1).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Unusable input data (CLI exit code 2).
struct DataError : std::runtime_error {
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// Failure while sampling, e.g. a non-finite posterior (CLI exit code 3).
struct SamplerError : std::runtime_error {
  explicit SamplerError(const std::string& what) : std::runtime_error(what) {}
};

/// Convergence check failed under --strict (CLI exit code 4).
struct DiagnosticsError : std::runtime_error {
  explicit DiagnosticsError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace b3
