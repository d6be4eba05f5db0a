#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace balm {

enum class ErrorKind {
  kNotPositiveDefinite,
  kDimensionMismatch,
  kNoConvergence,
  kInnerNoConvergence,
  kUnsupportedObjective,
  kUnsupportedCombination,
  kConfigInvalid,
  kInsufficientHistory,
  kMissingReference,
  kInvalidDims,
  kSchemaError,
  kIoError,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kNotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorKind::kDimensionMismatch: return "DimensionMismatch";
    case ErrorKind::kNoConvergence: return "NoConvergence";
    case ErrorKind::kInnerNoConvergence: return "InnerNoConvergence";
    case ErrorKind::kUnsupportedObjective: return "UnsupportedObjective";
    case ErrorKind::kUnsupportedCombination: return "UnsupportedCombination";
    case ErrorKind::kConfigInvalid: return "ConfigInvalid";
    case ErrorKind::kInsufficientHistory: return "InsufficientHistory";
    case ErrorKind::kMissingReference: return "MissingReference";
    case ErrorKind::kInvalidDims: return "InvalidDims";
    case ErrorKind::kSchemaError: return "SchemaError";
    case ErrorKind::kIoError: return "IoError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the kinds above so
/// callers (the CLI in particular) can map it to an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

namespace detail {

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline void require_dims(bool ok, const std::string& what) {
  if (!ok) fail(ErrorKind::kDimensionMismatch, what);
}

}  // namespace detail
}  // namespace balm
