#pragma once

#include <stdexcept>
#include <string>

namespace ganlink {

// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Caller broke an API contract (wrong model kind, missing gradient, bad call order).
struct UsageError : Error {
    using Error::Error;
};

// Invalid configuration values or configuration files.
struct ConfigError : Error {
    using Error::Error;
};

// Problems with input data: manifests, segments, lookups, degenerate inputs.
struct DataError : Error {
    using Error::Error;
};

// Filesystem-level failures (open/read/write).
struct IoError : Error {
    using Error::Error;
};

// Structured file-format failure. kind() lets callers and tests distinguish
// a wrong magic from a wrong version from a short read.
class FormatError : public Error {
public:
    enum class Kind { bad_magic, bad_version, bad_dtype, truncated, corrupt };

    FormatError(Kind kind, const std::string& msg) : Error(msg), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

} // namespace ganlink
