#pragma once

#include <stdexcept>
#include <string>

namespace msreid {

// Dimension or array-length disagreement between arguments.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error("shape error: " + msg) {}
};

// A scalar argument outside its admissible range (temperature <= 0, bad enum, ...).
struct ParameterError : std::runtime_error {
    explicit ParameterError(const std::string& msg) : std::runtime_error("parameter error: " + msg) {}
};

// A caller broke a documented precondition (empty positive set, outlier in a loss batch, ...).
struct ContractViolation : std::runtime_error {
    explicit ContractViolation(const std::string& msg) : std::runtime_error("contract violation: " + msg) {}
};

// Numerically degenerate input, e.g. a vector whose norm is too small to normalize.
struct DegenerateInputError : std::runtime_error {
    explicit DegenerateInputError(const std::string& msg) : std::runtime_error("degenerate input: " + msg) {}
};

// Malformed or truncated serialized state.
struct DecodeError : std::runtime_error {
    explicit DecodeError(const std::string& msg) : std::runtime_error("decode error: " + msg) {}
};

}  // namespace msreid
