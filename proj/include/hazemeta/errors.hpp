#pragma once

#include <stdexcept>
#include <string>

namespace hazemeta {

/// Invalid configuration (CLI exit code 2).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Numeric failure such as a non-finite loss (CLI exit code 3).
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Filesystem/IO failure (CLI exit code 4).
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace hazemeta
