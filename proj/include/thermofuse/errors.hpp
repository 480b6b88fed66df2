#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace thermofuse {

// All failures surface as Error with a short machine-readable category.
// The CLI prints them as "error: <category>: <message>" on one line.
class Error : public std::runtime_error {
public:
  Error(std::string category, const std::string& message)
      : std::runtime_error(category + ": " + message),
        category_(std::move(category)) {}

  const std::string& category() const noexcept { return category_; }

private:
  std::string category_;
};

// File cannot be opened / read / written.
class IoError : public Error {
public:
  explicit IoError(const std::string& m) : Error("io", m) {}
};

// Container header is malformed (bad magic, unparsable JSON, missing key).
class FormatError : public Error {
public:
  explicit FormatError(const std::string& m) : Error("format", m) {}
};

// Payload byte count disagrees with the header dimensions.
class PayloadError : public Error {
public:
  explicit PayloadError(const std::string& m) : Error("payload", m) {}
};

// A structural invariant of an in-memory object is violated.
class InvariantError : public Error {
public:
  explicit InvariantError(const std::string& m) : Error("invariant", m) {}
};

// Tensor / image dimensions are incompatible with the requested operation.
class ShapeError : public Error {
public:
  explicit ShapeError(const std::string& m) : Error("shape", m) {}
};

// A configuration value is out of range or inconsistent.
class ConfigError : public Error {
public:
  explicit ConfigError(const std::string& m) : Error("config", m) {}
};

// Numeric data is non-finite or degenerate (e.g. rank-deficient fit).
class ValueError : public Error {
public:
  explicit ValueError(const std::string& m) : Error("value", m) {}
};

inline void require(bool cond, const std::string& message) {
  if (!cond) throw InvariantError(message);
}

}  // namespace thermofuse
