#pragma once

#include <stdexcept>
#include <string>

namespace csgeim {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid input, configuration or file content. The CLI maps it to exit code 2.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Solver failure (non-convergence, loss of positivity, iteration caps).
/// The CLI maps it to exit code 3.
class NumericalError : public Error {
public:
    using Error::Error;
};

namespace detail {

inline void require(bool condition, const std::string& message)
{
    if (!condition) {
        throw ConfigError(message);
    }
}

} // namespace detail

} // namespace csgeim
