#pragma once

#include <stdexcept>
#include <string>

namespace criacl {

/// Invalid or inconsistent configuration. CLI exit code 2.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor shape or image size violates an operation's contract.
class ShapeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// NaN/Inf in a loss term or gradient. CLI exit code 3.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input file (CSV, manifest, image).
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace criacl
