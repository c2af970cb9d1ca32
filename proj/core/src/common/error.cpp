#include "ces/common/error.hpp"

namespace ces {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kMalformedDocument: return "malformed-document";
    case ErrorCode::kNonRadial: return "non-radial";
    case ErrorCode::kDuplicateId: return "duplicate-id";
    case ErrorCode::kMissingSubstation: return "missing-substation";
    case ErrorCode::kUnknownUnit: return "unknown-unit";
    case ErrorCode::kBoundViolation: return "bound-violation";
    case ErrorCode::kDimensionMismatch: return "dimension-mismatch";
    case ErrorCode::kNotPositiveSemidefinite: return "not-psd";
    case ErrorCode::kUnknownBus: return "unknown-bus";
    case ErrorCode::kNotCt2: return "not-ct2";
    case ErrorCode::kOutOfRange: return "out-of-range";
    case ErrorCode::kInfeasible: return "infeasible";
    case ErrorCode::kSolverFailure: return "solver-failure";
    case ErrorCode::kPermissionDenied: return "permission-denied";
    case ErrorCode::kConflict: return "conflict";
    case ErrorCode::kNotFound: return "not-found";
    case ErrorCode::kReplicationFault: return "replication-fault";
    case ErrorCode::kOrdering: return "ordering";
    case ErrorCode::kUnauthenticated: return "unauthenticated";
    case ErrorCode::kStaleNonce: return "stale-nonce";
  }
  return "unknown";
}

}  // namespace ces
