#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace qdial {

enum class ErrorKind {
  InvalidArgument,
  HalfFluxDivergence,
  OverCritical,
  TangentPole,
  NoRootFound,
  DegenerateUnhandled,
  StepFailure,
  FitDiverged,
  RankDeficient,
  InvalidPopulations,
  TooFewWindows,
  SingularComponent,
  NotConverged,
  SingularCovariance,
  OutOfRange,
  EmptyRow,
  AllOverflow,
  NoOscillation,
  DivisionByZero,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library carries a machine-readable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace qdial
