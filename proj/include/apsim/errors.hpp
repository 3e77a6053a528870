#pragma once

#include <stdexcept>
#include <string>

namespace apsim {

// Invalid configuration, schema violation, or precondition failure detected
// before any simulation step runs. Maps to CLI exit code 2.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numeric failure (NaN/Inf in state) during a run. Maps to CLI exit code 3.
class NumericError : public std::runtime_error {
public:
    NumericError(const std::string& msg, long step_index)
        : std::runtime_error(msg + " (step " + std::to_string(step_index) + ")"),
          step(step_index) {}
    long step;
};

// File-system failure. Maps to CLI exit code 4.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Raised by the profile estimator when the design matrix is rank-deficient
// and a free parameter cannot be identified from the trace.
class UnidentifiableError : public std::runtime_error {
public:
    UnidentifiableError(const std::string& param, const std::string& why)
        : std::runtime_error("parameter '" + param + "' is unidentifiable: " + why),
          parameter(param) {}
    std::string parameter;
};

} // namespace apsim
