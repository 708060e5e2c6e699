#pragma once

#include <stdexcept>
#include <string>

namespace semiefgm {

/// Raised when an argument violates a documented precondition.
class InvalidInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when an operation is asked to work outside its supported regime
/// (for example tensor quadrature beyond four variates).
class UnsupportedOperation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

namespace detail {

inline void require(bool condition, const std::string& message)
{
    if (!condition) throw InvalidInput(message);
}

} // namespace detail
} // namespace semiefgm
