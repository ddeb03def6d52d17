#pragma once

#include <stdexcept>
#include <string>

namespace warpreg {

/// Malformed or unsupported file content (bad magic, truncated payload, parse failure).
struct FormatError : std::runtime_error {
  explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Operands whose shapes are incompatible with the requested operation.
struct DimensionError : std::invalid_argument {
  explicit DimensionError(const std::string& msg) : std::invalid_argument(msg) {}
};

/// Invalid configuration value (out-of-range parameter, impossible preset).
struct ConfigError : std::invalid_argument {
  explicit ConfigError(const std::string& msg) : std::invalid_argument(msg) {}
};

/// Filesystem failure while reading or writing an artifact.
struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Input that is technically well-formed but useless for the algorithm
/// (e.g. a constant image fed to phase correlation).
struct DegenerateInputError : std::invalid_argument {
  explicit DegenerateInputError(const std::string& msg) : std::invalid_argument(msg) {}
};

}  // namespace warpreg
