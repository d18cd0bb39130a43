#ifndef AMISHIELD_ERROR_HPP
#define AMISHIELD_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace amishield {

enum class ErrorCode {
  // pcap
  BadMagic,
  Truncated,
  MalformedHeader,
  IoFailure,
  // bytevis / detector
  IndexOutOfRange,
  BadQuadrantSplit,
  DegenerateDataset,
  NonFiniteLoss,
  EmptyDataset,
  // reasoner
  SchemaViolation,
  UnknownPredicate,
  // bayesian attack graph
  TooLargeForExact,
  InconsistentEvidence,
  UnknownNode,
  // mitigation
  TargetUnreachable,
  Unblockable,
  SearchLimitExceeded,
  // planner / simulator
  NoGoals,
  InvalidCounts,
  OversizedPayload,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::Truncated: return "Truncated";
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::BadQuadrantSplit: return "BadQuadrantSplit";
    case ErrorCode::DegenerateDataset: return "DegenerateDataset";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::SchemaViolation: return "SchemaViolation";
    case ErrorCode::UnknownPredicate: return "UnknownPredicate";
    case ErrorCode::TooLargeForExact: return "TooLargeForExact";
    case ErrorCode::InconsistentEvidence: return "InconsistentEvidence";
    case ErrorCode::UnknownNode: return "UnknownNode";
    case ErrorCode::TargetUnreachable: return "TargetUnreachable";
    case ErrorCode::Unblockable: return "Unblockable";
    case ErrorCode::SearchLimitExceeded: return "SearchLimitExceeded";
    case ErrorCode::NoGoals: return "NoGoals";
    case ErrorCode::InvalidCounts: return "InvalidCounts";
    case ErrorCode::OversizedPayload: return "OversizedPayload";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (the CLI in particular) can map it to a stable exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace amishield

#endif  // AMISHIELD_ERROR_HPP
