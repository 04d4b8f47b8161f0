#pragma once

#include <stdexcept>
#include <string>

namespace mixopt {

enum class ErrorKind {
  InvalidInput,
  DimensionMismatch,
  EmptyDataset,
  Io,
  Config,
  InvariantFailure,
  Internal,
};

/// Exception type used by every module. The kind drives CLI exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) throw Error(kind, message);
}

}  // namespace mixopt
