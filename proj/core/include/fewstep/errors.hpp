#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fewstep {

// Argument outside the domain of a schedule or inverse map.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

class ArgumentError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Floating-point failure inside a numerical routine (non-finite input,
// quadrature that did not converge, ...).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A solver produced a non-finite state.
class DivergenceError : public NumericalError {
public:
    DivergenceError(std::size_t step, const std::string& what)
        : NumericalError(what), step_(step) {}

    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

// An operation was invoked on an object in the wrong state (e.g. an
// LMS step with an empty history).
class StateError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

// A reference solver could not reach its tolerance within budget.
class AccuracyError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Checkpoint and configuration disagree on shape or provenance.
class CompatibilityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace fewstep
