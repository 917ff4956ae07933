#pragma once

#include <stdexcept>
#include <string>

namespace gdflow {

// Exit-code mapping: ConfigError -> 2, DataError -> 3, NumericError -> 4.
struct GdError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : GdError {
    using GdError::GdError;
};

struct DataError : GdError {
    using GdError::GdError;
};

struct NumericError : GdError {
    using GdError::GdError;
};

struct ShapeError : NumericError {
    using NumericError::NumericError;
};

} // namespace gdflow
