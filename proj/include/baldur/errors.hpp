#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace baldur {

enum class ErrorKind {
  MissingFile,
  ParseError,
  ShapeMismatch,
  NonBinaryTarget,
  NonFiniteValue,
  KTooLarge,
  InsufficientClassMembers,
  InvalidConfig,
  NumericalBreakdown,
  NegativeBeta,
  AllFactorsPruned,
  ViewMissing,
  FeatureCountMismatch,
  DegenerateLabels,
  SingleClassInput,
  VersionMismatch,
};

std::string_view to_string(ErrorKind kind);

// True for failures that originate in the numerics rather than in user input.
bool is_numerical(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace baldur
