#pragma once

#include <stdexcept>
#include <string>

namespace sae {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Checkpoint bytes do not follow the expected layout (magic, version, names).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint bytes end before the declared payload does.
class TruncatedError : public Error {
 public:
  using Error::Error;
};

/// Two parameter sets disagree on layer names, order or shapes.
class IncompatibleError : public Error {
 public:
  using Error::Error;
};

/// A parameter set does not match the expected network layout.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// An argument outside its documented domain.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

}  // namespace sae
