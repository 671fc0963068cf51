#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hjblab {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad user input: malformed files, invalid arguments, violated preconditions.
class InputError : public Error {
public:
    using Error::Error;
};

/// Expression text that does not match the coefficient grammar.
class ParseError : public InputError {
public:
    ParseError(const std::string& what, std::size_t offset)
        : InputError(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

/// A numerical computation produced a non-finite value or could not proceed.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Division by zero or square root of a negative number inside a coefficient.
class EvalError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

}  // namespace hjblab
