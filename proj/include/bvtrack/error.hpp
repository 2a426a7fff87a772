#pragma once

#include <stdexcept>
#include <string>

namespace bvtrack {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidMeshError : public Error {
public:
    using Error::Error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class NumericError : public Error {
public:
    using Error::Error;
};

class SingularMatrixError : public NumericError {
public:
    using NumericError::NumericError;
};

/// Krylov iteration produced a NaN or Inf.
class DivergenceError : public NumericError {
public:
    using NumericError::NumericError;
};

/// Krylov iteration found p^T A p <= 0.
class NotSpdError : public NumericError {
public:
    using NumericError::NumericError;
};

namespace detail {

inline void require_size(std::size_t got, std::size_t expected, const char* what)
{
    if (got != expected) {
        throw DimensionError(std::string(what) + ": expected length " + std::to_string(expected) +
                             ", got " + std::to_string(got));
    }
}

} // namespace detail
} // namespace bvtrack
