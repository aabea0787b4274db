#pragma once

#include <stdexcept>
#include <string>

namespace fsdet {

/// Base class for every error raised by the library. The CLI maps the
/// concrete subclasses onto process exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Caller supplied an argument outside an operation's domain.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// File could not be opened, read, parsed or written.
class IoError : public Error {
public:
    using Error::Error;
};

/// A computation produced a non-finite value.
class NumericError : public Error {
public:
    using Error::Error;
};

/// (gt, candidate) pair lies outside the range the RAN target can express.
class EncodingDomainError : public Error {
public:
    using Error::Error;
};

/// Checkpoint and runtime configuration disagree (L, W, H).
class CompatibilityError : public Error {
public:
    using Error::Error;
};

}  // namespace fsdet
