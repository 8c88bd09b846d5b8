#pragma once

#include <stdexcept>
#include <string>

namespace nfc {

// Shape conformance failures (matmul inner dims, broadcast, batch sizes).
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Math domain failures, e.g. log of a non-positive element. Usually means a
// clamp is missing upstream.
struct DomainError : std::runtime_error {
    explicit DomainError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid or incomplete experiment configuration. CLI exit code 2.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite value detected during training. CLI exit code 3.
struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

// File format / read / write failures. CLI exit code 4.
struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace nfc
