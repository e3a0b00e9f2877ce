#pragma once

#include <stdexcept>
#include <string>

namespace exrange {

// Error categories map one-to-one onto CLI exit codes.
enum class ErrorKind {
  Validation = 3,  // bad argument values
  Io = 4,          // filesystem failures
  Format = 5,      // malformed or inconsistent input data
  Numeric = 6,     // estimation cannot proceed (degenerate data)
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct ValidationError : Error {
  explicit ValidationError(const std::string& what) : Error(ErrorKind::Validation, what) {}
};
struct IoError : Error {
  explicit IoError(const std::string& what) : Error(ErrorKind::Io, what) {}
};
struct FormatError : Error {
  explicit FormatError(const std::string& what) : Error(ErrorKind::Format, what) {}
};
struct NumericError : Error {
  explicit NumericError(const std::string& what) : Error(ErrorKind::Numeric, what) {}
};

inline const char* kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::Validation: return "validation";
    case ErrorKind::Io: return "io";
    case ErrorKind::Format: return "format";
    case ErrorKind::Numeric: return "numeric";
  }
  return "unknown";
}

}  // namespace exrange
