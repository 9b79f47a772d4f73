#pragma once

#include <stdexcept>
#include <string>

namespace stmre {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor shapes that do not fit together.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// NaN or Inf reached a kernel boundary.
class NumericError : public Error {
public:
    using Error::Error;
};

class ArgumentError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

/// Empty or malformed datasets and manifests.
class DataError : public Error {
public:
    using Error::Error;
};

class SplitError : public DataError {
public:
    using DataError::DataError;
};

/// Image bytes that could not be decoded; the message carries the path.
class DecodeError : public DataError {
public:
    using DataError::DataError;
};

/// Metric undefined for the given input (e.g. a single class present).
class MetricError : public Error {
public:
    using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, int epoch, int batch)
        : Error(what), epoch_(epoch), batch_(batch) {}

    int epoch() const { return epoch_; }
    int batch() const { return batch_; }

private:
    int epoch_;
    int batch_;
};

}  // namespace stmre
