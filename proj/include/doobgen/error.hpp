#pragma once

#include <stdexcept>
#include <string>

namespace doobgen {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A constructor or operation received a parameter outside its admissible range.
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Vector or matrix dimensions do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A time argument lies outside the interval on which the quantity is defined.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Malformed caller input (unsorted grids, empty datasets, ...).
class InputError : public Error {
 public:
  using Error::Error;
};

/// A non-finite value was produced or consumed.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Invalid run configuration (unknown key, unparsable value, mismatched checkpoint).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Command-line or config-file misuse: unknown key, unparsable value, empty sweep grid.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// File could not be opened, read or parsed.
class FileError : public Error {
 public:
  using Error::Error;
};

namespace detail {

template <typename E>
inline void require(bool condition, const std::string& message) {
  if (!condition) throw E(message);
}

}  // namespace detail
}  // namespace doobgen
