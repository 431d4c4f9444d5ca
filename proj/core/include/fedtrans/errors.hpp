#pragma once

#include <stdexcept>
#include <string>

namespace fedtrans {

// Tensor/model shape violations (mismatched dims, bad labels, bad cell refs).
struct DimensionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite values produced during training; callers abort the offending update.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid user-supplied configuration.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed files (checkpoints, CSVs) or filesystem failures.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace fedtrans
