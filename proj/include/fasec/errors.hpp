#pragma once
#include <stdexcept>
#include <string>

namespace fasec {

// Base for every error raised by the library. The CLI maps subclasses to
// exit codes, so keep the hierarchy shallow.
class Error : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error
{
public:
    using Error::Error;
};

/// Malformed or incomplete configuration input.
class ConfigError : public Error
{
public:
    using Error::Error;
};

/// The scenario admits no point satisfying all constraints.
class InfeasibleScenario : public Error
{
public:
    using Error::Error;
};

/// Non-finite values, failed factorizations, or degenerate closed forms.
class NumericalError : public Error
{
public:
    using Error::Error;
};

/// Projection onto the probing set is undefined (zero probing power).
class DegenerateProjection : public NumericalError
{
public:
    using NumericalError::NumericalError;
};

} // namespace fasec
