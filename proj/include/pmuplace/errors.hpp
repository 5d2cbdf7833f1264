#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pmuplace {

// Error classes map onto CLI exit codes: validation 2, numerical 3, guard 4.

class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Case file could not be parsed. Carries the 1-based line when known.
class ParseError : public ValidationError {
public:
    ParseError(const std::string& what, std::size_t line = 0)
        : ValidationError(what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class SingularMatrixError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// A simulated state became non-finite.
class IntegrationBlowup : public NumericalError {
public:
    IntegrationBlowup(const std::string& what, std::size_t step)
        : NumericalError(what), step_(step) {}
    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

/// A precondition guard rejected the request (combinatorial limit,
/// fault on a generator terminal branch, ...).
class GuardError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace pmuplace
