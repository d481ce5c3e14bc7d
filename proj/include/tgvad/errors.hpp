#pragma once

#include <stdexcept>
#include <string>

namespace tgvad {

/// Base class for every error raised by the library. The C API maps each
/// subclass to a distinct status code, so new error kinds belong here.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Tensor shapes do not line up (matmul inner dims, row counts, ...).
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Two inputs that must be aligned (snippet counts, score lengths) differ.
class AlignmentError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration value or an unsatisfiable config combination.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// An API contract was violated (non-scalar backward, empty input, ...).
class ContractError : public Error {
public:
    using Error::Error;
};

/// Non-finite values where finite ones are required, or a diverged run.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Malformed on-disk artifact (bad magic, truncated payload, bad JSON).
class ParseError : public Error {
public:
    using Error::Error;
};

/// Filesystem-level failure (missing file, unwritable path).
class IoError : public Error {
public:
    using Error::Error;
};

/// LLM backend failure after retries.
class BackendError : public Error {
public:
    using Error::Error;
};

/// A metric is undefined on the given input (single-class labels, ...).
class MetricError : public Error {
public:
    using Error::Error;
};

} // namespace tgvad
