#pragma once

#include <stdexcept>
#include <string>

namespace asmr {

// Bad run configuration or command-line usage. CLI exit code 2.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed or inconsistent dataset / schema / checkpoint files. CLI exit code 3.
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failure: non-finite loss, degenerate vectors, shape mismatches
// inside the math kernels. CLI exit code 4.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace asmr
