#pragma once

#include <stdexcept>
#include <string>

namespace isofed {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes disagree with an operation's contract.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A configuration value or combination is invalid.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A file could not be opened, read or written.
class IoError : public Error {
 public:
  IoError(const std::string& path, const std::string& what)
      : Error(path + ": " + what), path_(path) {}

  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

/// A file was readable but its contents are malformed.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace isofed
