#pragma once

#include <stdexcept>
#include <string>

namespace mofs {

/// Bad configuration (mode bounds, width mismatches, invalid flags).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Non-finite values, diverged solves, CFL violations.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

/// Dataset/checkpoint file problems (magic, shape, truncation).
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

/// Usage errors surfaced by the CLI (exit code 2).
class UsageError : public std::runtime_error {
public:
    explicit UsageError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace mofs
