#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ces {

enum class ErrorCode {
  kInvalidArgument,
  kMalformedDocument,
  kNonRadial,
  kDuplicateId,
  kMissingSubstation,
  kUnknownUnit,
  kBoundViolation,
  kDimensionMismatch,
  kNotPositiveSemidefinite,
  kUnknownBus,
  kNotCt2,
  kOutOfRange,
  kInfeasible,
  kSolverFailure,
  kPermissionDenied,
  kConflict,
  kNotFound,
  kReplicationFault,
  kOrdering,
  kUnauthenticated,
  kStaleNonce,
};

std::string_view to_string(ErrorCode code);

// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace ces
