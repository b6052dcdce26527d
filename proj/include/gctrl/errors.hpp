#pragma once

#include <stdexcept>
#include <string>

namespace gctrl {

// Bad argument or violated precondition (dimension mismatch, off-grid time,
// schedule gap, malformed input).
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Evaluation outside the mathematical domain of a function (e.g. x <= 0 for
// power utility).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// Non-finite values, eigensolver failure, singular matrices.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A numerical precondition that can be checked before any work is done,
// e.g. the explicit-scheme CFL bound.
class PreconditionError : public std::runtime_error {
public:
    PreconditionError(const std::string& what, double bound)
        : std::runtime_error(what), bound_(bound) {}

    [[nodiscard]] double bound() const noexcept { return bound_; }

private:
    double bound_;
};

// Two routes that must agree did not (closed form vs ODE, residual oracle
// rejecting every candidate branch).
class ConsistencyError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace gctrl
