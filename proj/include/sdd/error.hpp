#pragma once

#include <stdexcept>
#include <string>

namespace sdd {

// Shape or axis violation (conv input vs kernel, pool window too large, ...).
struct dim_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid configuration (p + r > n, single-class training data, ...).
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Filesystem, wav or blob I/O failure.
struct io_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Structured-file violation: checkpoint manifest, corpus manifest, alignment file.
struct schema_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Declared and actual byte lengths disagree (truncated or padded blob).
struct size_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Numeric failure during training (NaN gradient, diverged parameter).
struct numeric_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace sdd
