#pragma once

#include <stdexcept>
#include <string>

namespace byzfl {

/// Caller supplied arguments that violate an operation's preconditions.
class InvalidInput : public std::invalid_argument {
public:
    explicit InvalidInput(const std::string& what) : std::invalid_argument(what) {}
};

/// A configuration file or object that cannot be resolved into a runnable experiment.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// An internal numerical solve (optimum, eigenvalue) failed to reach its tolerance.
class SolverFailure : public std::runtime_error {
public:
    SolverFailure(const std::string& what, double residual)
        : std::runtime_error(what + " (residual " + std::to_string(residual) + ")"), residual_(residual) {}

    double residual() const { return residual_; }

private:
    double residual_;
};

} // namespace byzfl
