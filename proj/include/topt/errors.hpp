#pragma once

#include <stdexcept>
#include <string>

namespace topt {

/// Base class for every error raised by the library.
class Error : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input: bad mesh parameters, invalid boundary data, etc.
class InvalidInput : public Error
{
public:
    using Error::Error;
};

/// A loaded node has lost every attached solid element, or the material
/// carrying a load is no longer connected to the supports.
class LoadPathError : public Error
{
public:
    using Error::Error;
};

/// The reduced stiffness matrix is not positive definite (mechanism).
class SingularSystemError : public Error
{
public:
    using Error::Error;
};

/// The linear solve failed its residual contract or produced NaN.
class SolverError : public Error
{
public:
    using Error::Error;
};

/// Configuration text could not be parsed or failed validation.
class ParseError : public Error
{
public:
    ParseError(const std::string &message, int line)
        : Error(line > 0 ? "line " + std::to_string(line) + ": " + message : message), line_(line)
    {
    }

    int line() const noexcept { return line_; }

private:
    int line_;
};

} // namespace topt
