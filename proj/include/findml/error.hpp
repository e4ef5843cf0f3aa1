#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace findml {

enum class ErrorCode {
  ZeroRow,
  KTooLarge,
  NumericalFailure,
  RetentionTooSmall,
  ClassTooSmall,
  DegenerateYellowChannel,
  ParseError,
  SchemaMismatch,
  InfeasiblePlan,
  NoNegativeInBatch,
  NoPositive,
  MissingProxy,
  DimensionMismatch,
  StaleCache,
  NonFiniteGradient,
  EmptyPairSet,
  EmptySubgroup,
  TooFewSubgroups,
  InsufficientRuns,
  SingleClass,
  ConfigError,
  IoError,
  InvalidArgument,
};

std::string_view to_string(ErrorCode code);

// Every failure raised by the library carries a machine-checkable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) throw Error(code, what);
}

}  // namespace findml
