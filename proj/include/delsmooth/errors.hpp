#pragma once

#include <stdexcept>
#include <string>

namespace delsmooth {

// Base for every error raised by the library. Callers that only care about
// "something went wrong" catch this; the CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad arguments or violated preconditions supplied by the caller.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Malformed or missing input data (dataset rows, model files, record files).
class DataError : public Error {
 public:
  using Error::Error;
};

// An enumeration or exact computation was asked to run past its scale guard.
class GuardError : public Error {
 public:
  using Error::Error;
};

// The external classifier process could not be reached, timed out or died.
class TransportError : public Error {
 public:
  using Error::Error;
};

// The external classifier answered, but not according to the line protocol.
class ProtocolError : public TransportError {
 public:
  using TransportError::TransportError;
};

}  // namespace delsmooth
