#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mixshap {

enum class ErrorCode {
  ArityMismatch,
  KindMismatch,
  LevelOutOfRange,
  InvalidSchema,
  DimensionTooLarge,
  GroupIndexOutOfRange,
  NonFiniteContribution,
  SingularSystem,
  NotAPartition,
  SchemaUnsupported,
  DegenerateCovariance,
  EmptyLeaf,
  UnfittedCoalition,
  NonFinitePrediction,
  RowMisalignment,
  UnseenLevel,
  SingularBlock,
  CholeskyFailure,
  MaxSubdivisionsExceeded,
  ZeroProbabilityCondition,
  LengthMismatch,
  NonPDCovariance,
  RankDeficientDesign,
  InvalidArgument,
  ParseError,
  IoError,
  Infeasible,
};

std::string_view to_string(ErrorCode code);

/// Single exception type for the library; `code()` identifies the failure.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  [[nodiscard]] ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace mixshap
