#pragma once

#include <stdexcept>
#include <string>

namespace loft {

// Shape or length mismatch between tensors/vectors.
struct DimensionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid configuration value (out-of-range parameter, bad grid, ...).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Degenerate or otherwise unusable data (zero-norm sample, unnormalized
// input where Assumption-style preconditions require it, singular kernel).
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite values or divergence during iteration.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Internally inconsistent structures: overlapping partitions, duplicate
// filter indices, incomplete index sets.
struct CorruptionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Violated operation precondition that is not a config value per se
// (e.g. rank map with missing elements fed to the plain footrule).
struct PreconditionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed external file contents (IDX magic, config syntax).
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace loft
