#pragma once

#include <stdexcept>
#include <string>

namespace hkt {

enum class ErrorKind {
  NotUnitTriple,
  BandwidthOverflow,
  ShapeMismatch,
  DegreeZero,
  WrongType,
  HypothesisViolated,
  SolverBudgetExceeded,
  SolverDiverged,
  NotClosed,
  NotExact,
  ConstraintProjectionTooLarge,
  StepSizeUnderflow,
  ObstructionNonzero,
  SeriesDiverging,
  ConfigInvalid,
};

const char* error_kind_name(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(error_kind_name(kind)) + ": " + what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

inline const char* error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NotUnitTriple: return "NotUnitTriple";
    case ErrorKind::BandwidthOverflow: return "BandwidthOverflow";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::DegreeZero: return "DegreeZero";
    case ErrorKind::WrongType: return "WrongType";
    case ErrorKind::HypothesisViolated: return "HypothesisViolated";
    case ErrorKind::SolverBudgetExceeded: return "SolverBudgetExceeded";
    case ErrorKind::SolverDiverged: return "SolverDiverged";
    case ErrorKind::NotClosed: return "NotClosed";
    case ErrorKind::NotExact: return "NotExact";
    case ErrorKind::ConstraintProjectionTooLarge: return "ConstraintProjectionTooLarge";
    case ErrorKind::StepSizeUnderflow: return "StepSizeUnderflow";
    case ErrorKind::ObstructionNonzero: return "ObstructionNonzero";
    case ErrorKind::SeriesDiverging: return "SeriesDiverging";
    case ErrorKind::ConfigInvalid: return "ConfigInvalid";
  }
  return "Unknown";
}

}  // namespace hkt
