#pragma once

#include <stdexcept>
#include <string>

namespace vecdraw {

/// Base of every error thrown by the library. The CLI maps subclasses onto
/// process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or arguments (exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Argument outside a function's mathematical domain.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Caller broke a precondition (shape mismatch, singular transform, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Scoring service unreachable, timed out or hung up (exit code 3).
class TransportError : public Error {
 public:
  using Error::Error;
};

/// Malformed or unexpected frame on the service wire (exit code 3).
class ProtocolError : public Error {
 public:
  using Error::Error;
};

/// The service answered with an error frame; message is passed through verbatim.
class RemoteError : public Error {
 public:
  using Error::Error;
};

/// Non-finite loss or gradient during optimization (exit code 4).
class NumericError : public Error {
 public:
  using Error::Error;
};

/// File system failure (exit code 5).
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace vecdraw
