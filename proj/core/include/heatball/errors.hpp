#pragma once

#include <stdexcept>
#include <string>

namespace heatball {

// Base for everything that should map to a "numerical failure" exit path
// (as opposed to bad user input, which is std::invalid_argument).
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NotFullError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct NonConvergence : NumericalError {
    using NumericalError::NumericalError;
};

struct TruncationError : NumericalError {
    using NumericalError::NumericalError;
};

struct BoundaryContact : NumericalError {
    using NumericalError::NumericalError;
};

struct BoxTooSmall : NumericalError {
    using NumericalError::NumericalError;
};

struct RunawayWalk : NumericalError {
    using NumericalError::NumericalError;
};

struct FitFailure : NumericalError {
    using NumericalError::NumericalError;
};

struct QuadratureError : NumericalError {
    using NumericalError::NumericalError;
};

struct EmptySetError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct EmptyShape : EmptySetError {
    using EmptySetError::EmptySetError;
};

} // namespace heatball
