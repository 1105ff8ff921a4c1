#include "mixshap/error.hpp"

namespace mixshap {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ArityMismatch: return "ArityMismatch";
    case ErrorCode::KindMismatch: return "KindMismatch";
    case ErrorCode::LevelOutOfRange: return "LevelOutOfRange";
    case ErrorCode::InvalidSchema: return "InvalidSchema";
    case ErrorCode::DimensionTooLarge: return "DimensionTooLarge";
    case ErrorCode::GroupIndexOutOfRange: return "GroupIndexOutOfRange";
    case ErrorCode::NonFiniteContribution: return "NonFiniteContribution";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::NotAPartition: return "NotAPartition";
    case ErrorCode::SchemaUnsupported: return "SchemaUnsupported";
    case ErrorCode::DegenerateCovariance: return "DegenerateCovariance";
    case ErrorCode::EmptyLeaf: return "EmptyLeaf";
    case ErrorCode::UnfittedCoalition: return "UnfittedCoalition";
    case ErrorCode::NonFinitePrediction: return "NonFinitePrediction";
    case ErrorCode::RowMisalignment: return "RowMisalignment";
    case ErrorCode::UnseenLevel: return "UnseenLevel";
    case ErrorCode::SingularBlock: return "SingularBlock";
    case ErrorCode::CholeskyFailure: return "CholeskyFailure";
    case ErrorCode::MaxSubdivisionsExceeded: return "MaxSubdivisionsExceeded";
    case ErrorCode::ZeroProbabilityCondition: return "ZeroProbabilityCondition";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::NonPDCovariance: return "NonPDCovariance";
    case ErrorCode::RankDeficientDesign: return "RankDeficientDesign";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::Infeasible: return "Infeasible";
  }
  return "Unknown";
}

}  // namespace mixshap
