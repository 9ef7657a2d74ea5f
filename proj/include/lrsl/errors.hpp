#pragma once

#include <stdexcept>
#include <string>

namespace lrsl {

// Raised when operand shapes do not agree.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Invalid configuration or arguments supplied by the caller.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class RankTooLargeError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(const std::string& what, double residual)
        : std::runtime_error(what), residual_(residual) {}
    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

// A value became NaN or infinite during training.
class NonFiniteError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Stored data is corrupt or does not match what the reader expects.
class DataIntegrityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace lrsl
