#pragma once

#include <stdexcept>
#include <string>

namespace sglab {

// Base for everything thrown by this library, so callers can catch coarsely.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Operand dimensions do not line up.
struct ShapeError : Error {
    using Error::Error;
};

// NaN/Inf where a finite value is required.
struct NumericError : Error {
    using Error::Error;
};

// Argument outside its allowed domain.
struct ValueError : Error {
    using Error::Error;
};

// File missing, malformed, or unwritable.
struct IoError : Error {
    using Error::Error;
};

// Experiment configuration rejected before any work starts.
struct ConfigError : Error {
    using Error::Error;
};

} // namespace sglab
