#include "findml/error.hpp"

namespace findml {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ZeroRow: return "ZeroRow";
    case ErrorCode::KTooLarge: return "KTooLarge";
    case ErrorCode::NumericalFailure: return "NumericalFailure";
    case ErrorCode::RetentionTooSmall: return "RetentionTooSmall";
    case ErrorCode::ClassTooSmall: return "ClassTooSmall";
    case ErrorCode::DegenerateYellowChannel: return "DegenerateYellowChannel";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::InfeasiblePlan: return "InfeasiblePlan";
    case ErrorCode::NoNegativeInBatch: return "NoNegativeInBatch";
    case ErrorCode::NoPositive: return "NoPositive";
    case ErrorCode::MissingProxy: return "MissingProxy";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::StaleCache: return "StaleCache";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::EmptyPairSet: return "EmptyPairSet";
    case ErrorCode::EmptySubgroup: return "EmptySubgroup";
    case ErrorCode::TooFewSubgroups: return "TooFewSubgroups";
    case ErrorCode::InsufficientRuns: return "InsufficientRuns";
    case ErrorCode::SingleClass: return "SingleClass";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

}  // namespace findml
