#pragma once

#include <stdexcept>
#include <string>

namespace nlinv {

enum class ErrorKind {
  InvalidArgument,
  InsufficientData,
  DegenerateData,
  Numeric,
  TrainingDiverged,
  Format,
  Parse,
  Io,
};

const char* to_string(ErrorKind kind);

/// Single exception type for the library; `kind()` drives CLI exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace nlinv
