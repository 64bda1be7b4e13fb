#pragma once

#include <stdexcept>
#include <string>

namespace sigforge {

// Base class for everything thrown by this library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad user input: config fields, shapes, preconditions. CLI exit code 2.
class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& msg) : Error(msg) {}
};

// Train/test partition discipline violated.
class LeakageError : public ValidationError {
public:
    explicit LeakageError(const std::string& msg) : ValidationError(msg) {}
};

// File problems: missing, truncated, unsupported format.
class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error(msg) {}
};

// A loss or intermediate value went non-finite; carries the component name.
class NumericError : public Error {
public:
    explicit NumericError(const std::string& msg) : Error(msg) {}
};

}  // namespace sigforge
