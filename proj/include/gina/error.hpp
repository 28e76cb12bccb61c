#pragma once

#include <stdexcept>
#include <string>

namespace gina {

// Exception hierarchy. The CLI maps each family onto a distinct exit code.

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Operand shapes do not conform to the requested operation.
struct ShapeError : Error {
    using Error::Error;
};

/// Argument outside the mathematical domain of an operation (log of a
/// non-positive value, non-binary mask, ...).
struct DomainError : Error {
    using Error::Error;
};

/// Malformed or inconsistent input data.
struct DataError : Error {
    using Error::Error;
};

/// Invalid configuration or model specification.
struct ConfigError : Error {
    using Error::Error;
};

/// A NaN or infinity appeared where a finite value is required.
struct NumericError : Error {
    using Error::Error;
};

}  // namespace gina
