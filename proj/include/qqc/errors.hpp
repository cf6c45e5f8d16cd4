#pragma once

#include <stdexcept>
#include <string>

namespace qqc {

// Error categories used across the library. All derive from std::runtime_error
// so callers that do not care about the category can catch one type.

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error("config: " + msg) {}
};

struct DomainError : std::runtime_error {
    explicit DomainError(const std::string& msg) : std::runtime_error("domain: " + msg) {}
};

struct SetupError : std::runtime_error {
    explicit SetupError(const std::string& msg) : std::runtime_error("setup: " + msg) {}
};

struct AnalysisError : std::runtime_error {
    explicit AnalysisError(const std::string& msg) : std::runtime_error("analysis: " + msg) {}
};

struct TuningError : std::runtime_error {
    explicit TuningError(const std::string& msg) : std::runtime_error("tuning: " + msg) {}
};

// Raised when a collision run hits its step budget before the interaction
// quiet-window criterion is met. Partial data stays with the outcome.
struct TruncatedRunError : std::runtime_error {
    explicit TruncatedRunError(const std::string& msg) : std::runtime_error("truncated run: " + msg) {}
};

struct StabilityError : std::runtime_error {
    explicit StabilityError(const std::string& msg) : std::runtime_error("stability: " + msg) {}
};

}  // namespace qqc
