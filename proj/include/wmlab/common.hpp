#pragma once

#include <stdexcept>
#include <string>

namespace wmlab {

inline constexpr const char* kVersion = "0.1.0";

// Caller passed arguments outside the documented contract.
struct UsageError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// A configuration document is malformed or inconsistent.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A computation could not produce a valid result (non-convergence,
// missing checkpoint, failed quadrature, ...).
struct ComputeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline void require_usage(bool cond, const std::string& msg) {
    if (!cond) throw UsageError(msg);
}

inline void require_config(bool cond, const std::string& msg) {
    if (!cond) throw ConfigError(msg);
}

}  // namespace wmlab
