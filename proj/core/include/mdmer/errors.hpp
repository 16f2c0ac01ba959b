#pragma once

#include <stdexcept>
#include <string>

namespace mdmer {

/// Malformed input file or stream (bad magic, truncated chunk, ...).
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

/// Input uses an encoding the library deliberately does not handle.
class UnsupportedCodecError : public FormatError {
 public:
  explicit UnsupportedCodecError(const std::string& what) : FormatError(what) {}
};

/// Tensor or matrix dimensions do not agree.
class ShapeError : public std::runtime_error {
 public:
  explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

/// A configuration value violates its documented constraints.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Semantically invalid data (duplicate ids, out-of-range labels, ...).
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

/// Filesystem level failure.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

/// Non-finite value produced by a numeric kernel (debug checks only).
class NumericFault : public std::runtime_error {
 public:
  explicit NumericFault(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace mdmer
