#include "baldur/errors.hpp"

namespace baldur {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MissingFile: return "MissingFile";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::NonBinaryTarget: return "NonBinaryTarget";
    case ErrorKind::NonFiniteValue: return "NonFiniteValue";
    case ErrorKind::KTooLarge: return "KTooLarge";
    case ErrorKind::InsufficientClassMembers: return "InsufficientClassMembers";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::NumericalBreakdown: return "NumericalBreakdown";
    case ErrorKind::NegativeBeta: return "NegativeBeta";
    case ErrorKind::AllFactorsPruned: return "AllFactorsPruned";
    case ErrorKind::ViewMissing: return "ViewMissing";
    case ErrorKind::FeatureCountMismatch: return "FeatureCountMismatch";
    case ErrorKind::DegenerateLabels: return "DegenerateLabels";
    case ErrorKind::SingleClassInput: return "SingleClassInput";
    case ErrorKind::VersionMismatch: return "VersionMismatch";
  }
  return "Unknown";
}

bool is_numerical(ErrorKind kind) {
  return kind == ErrorKind::NumericalBreakdown || kind == ErrorKind::NegativeBeta ||
         kind == ErrorKind::AllFactorsPruned;
}

}  // namespace baldur
