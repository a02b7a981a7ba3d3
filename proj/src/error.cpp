#include "qdial/error.hpp"

namespace qdial {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::HalfFluxDivergence: return "HalfFluxDivergence";
    case ErrorKind::OverCritical: return "OverCritical";
    case ErrorKind::TangentPole: return "TangentPole";
    case ErrorKind::NoRootFound: return "NoRootFound";
    case ErrorKind::DegenerateUnhandled: return "DegenerateUnhandled";
    case ErrorKind::StepFailure: return "StepFailure";
    case ErrorKind::FitDiverged: return "FitDiverged";
    case ErrorKind::RankDeficient: return "RankDeficient";
    case ErrorKind::InvalidPopulations: return "InvalidPopulations";
    case ErrorKind::TooFewWindows: return "TooFewWindows";
    case ErrorKind::SingularComponent: return "SingularComponent";
    case ErrorKind::NotConverged: return "NotConverged";
    case ErrorKind::SingularCovariance: return "SingularCovariance";
    case ErrorKind::OutOfRange: return "OutOfRange";
    case ErrorKind::EmptyRow: return "EmptyRow";
    case ErrorKind::AllOverflow: return "AllOverflow";
    case ErrorKind::NoOscillation: return "NoOscillation";
    case ErrorKind::DivisionByZero: return "DivisionByZero";
  }
  return "Unknown";
}

}  // namespace qdial
