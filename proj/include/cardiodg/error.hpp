#pragma once

#include <stdexcept>
#include <string>

namespace cardiodg {

/// Base class for every error raised by the library. Messages are meant to be
/// shown to the user verbatim (the CLI prints them and exits non-zero).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data (files, manifests, checkpoints).
class DataError : public Error {
public:
    using Error::Error;
};

/// Shape or argument contract violated by a caller.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Training diverged (non-finite loss or gradient).
class NumericError : public Error {
public:
    using Error::Error;
};

} // namespace cardiodg
