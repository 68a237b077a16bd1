#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace lowmach {

/// Argument outside the mathematical domain of a closure function.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Parameters that cannot produce a well-posed problem (bad config, eps too large, ...).
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Malformed input data handed to an analysis routine.
class InputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// An iterative solver failed; carries the residual / gradient history.
class SolverError : public std::runtime_error {
public:
    SolverError(const std::string& what, std::vector<double> history)
        : std::runtime_error(what), history_(std::move(history)) {}

    const std::vector<double>& history() const noexcept { return history_; }

private:
    std::vector<double> history_;
};

}  // namespace lowmach
