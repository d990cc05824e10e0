#pragma once

#include <stdexcept>
#include <string>

namespace headfuse {

/// Bad inputs: shape mismatches, invalid files, violated preconditions.
class ValidationError : public std::invalid_argument {
public:
    explicit ValidationError(const std::string& msg) : std::invalid_argument(msg) {}
};

/// Numerical breakdown: rank deficiency, divergence, non-PSD beyond tolerance.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

/// File system / serialization failures.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Process exit codes used by the CLI.
inline constexpr int exit_ok = 0;
inline constexpr int exit_validation = 2;
inline constexpr int exit_numerical = 3;
inline constexpr int exit_io = 4;

} // namespace headfuse
