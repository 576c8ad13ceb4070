#pragma once

#include <stdexcept>
#include <string>

namespace dynlab {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Bad scenario/config input, missing stage dependency, invalid parameter.
/// Maps to process exit code 2.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Numerical failure: non-convergence, blow-up, quadrature failure,
/// violated model assumption detected at runtime. Maps to exit code 3.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Labeled region structure is not the expected bottom/middle/top banding.
class TopologyError : public NumericError {
public:
    using NumericError::NumericError;
};

/// Expression parse or evaluation failure; carries a byte offset into the
/// source text.
class ExpressionError : public ConfigError {
public:
    ExpressionError(const std::string& msg, std::size_t offset)
        : ConfigError(msg + " (at byte " + std::to_string(offset) + ")"),
          offset_(offset) {}

    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

}  // namespace dynlab
