#pragma once

#include <stdexcept>
#include <string>

namespace damqa {

/// Base for every error raised by the library. Callers that only need to
/// report a failure can catch this; the subclasses below let the CLI map
/// failures onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidImageError : public Error {
 public:
  using Error::Error;
};

class InvalidInputError : public Error {
 public:
  using Error::Error;
};

class TemplateError : public Error {
 public:
  using Error::Error;
};

/// Network failure or timeout that survived every retry.
class BackendUnavailableError : public Error {
 public:
  using Error::Error;
};

/// The server answered, but not in the shape the wire protocol requires.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

/// Bad dataset, prediction or config file contents.
class DataError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

}  // namespace damqa
