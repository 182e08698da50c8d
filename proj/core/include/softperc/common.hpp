#pragma once

#include <stdexcept>
#include <string>

namespace softperc {

/// File/stream content does not match the expected on-disk format
/// (bad magic, version mismatch, truncation, shape inconsistency).
struct DataFormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A numeric computation left its valid domain (non-finite loss,
/// non-finite gradient, solver breakdown).
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Caller passed arguments that can never be valid (CLI maps this to
/// its usage exit code).
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Cap the worker threads of the linear-algebra backend; returns the
/// effective count. Nonpositive values select the hardware default.
int set_thread_count(int threads);

}  // namespace softperc
