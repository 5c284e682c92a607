// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace testgenie {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A documented precondition of an operation was violated by the caller.
class PreconditionError : public Error {
public:
    using Error::Error;
};

/// Source could not be read (missing file, unreachable URL).
class FetchError : public Error {
public:
    using Error::Error;
};

/// Input text could not be parsed; the message carries the source location.
class DocumentParseError : public Error {
public:
    using Error::Error;
};

/// A referenced entity (spec, model, session, attempt) does not exist.
class NotFoundError : public Error {
public:
    using Error::Error;
};

} // namespace testgenie
