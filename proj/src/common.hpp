/// common.hpp - shared error types and small helpers.
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace sargen {

/// Bad or inconsistent configuration (unknown keys, shape conflicts,
/// invalid schedules). CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A required input artifact (dataset, checkpoint, hierarchy) is missing
/// or unreadable. CLI maps this to exit code 3.
struct MissingArtifactError : std::runtime_error {
    explicit MissingArtifactError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Non-finite values detected in a computation, or a training loss went
/// NaN. CLI maps this to exit code 4.
struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

inline constexpr const char* kVersion = "0.1.0";

}  // namespace sargen
