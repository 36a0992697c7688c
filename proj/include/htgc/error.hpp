#pragma once

#include <stdexcept>
#include <string>

namespace htgc {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad matrix construction or incompatible operands.
class MatrixError : public Error {
 public:
  using Error::Error;
};

/// Invalid map, dimension or processor query.
class MapError : public Error {
 public:
  using Error::Error;
};

/// Malformed configuration value or file.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// I/O failure; the message always carries the path involved.
class IoError : public Error {
 public:
  IoError(const std::string& path, const std::string& what)
      : Error(path + ": " + what), path_(path) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

}  // namespace htgc
