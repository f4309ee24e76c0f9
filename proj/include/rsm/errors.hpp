#pragma once

#include <stdexcept>
#include <string>

namespace rsm {

// Shape disagreement between tensors (matmul inner dims, state vs config, ...).
struct DimensionError : std::runtime_error {
    explicit DimensionError(const std::string& what) : std::runtime_error(what) {}
};

// Argument outside its documented range (top-k width, probabilities, labels).
struct ParameterError : std::runtime_error {
    explicit ParameterError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite value where a finite one is required.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Bad run configuration (unknown key, unparsable value). CLI exit code 2.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Unreadable or corrupt data files (datasets, checkpoints). CLI exit code 3.
struct DataError : std::runtime_error {
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace rsm
