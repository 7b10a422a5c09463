#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gpa {

enum class ErrorKind {
  NotAProbabilityVector,
  NegativeKernelEntry,
  DimensionMismatch,
  ParameterOutOfRange,
  QuadratureFailure,
  ZeroAttractiveness,
  DensitySamplingFailure,
  CouplingViolation,
  EmptyGraph,
  BoundaryPoint,
  NonConvergence,
  ZeroKernelRow,
  DegenerateMass,
  NoSignChange,
  DegreeBelowM,
  EmptyHistogram,
  WrongPhase,
  IntervalOutOfRange,
  InvalidSeedGraph,
  ConfigError,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NotAProbabilityVector: return "NotAProbabilityVector";
    case ErrorKind::NegativeKernelEntry: return "NegativeKernelEntry";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::ParameterOutOfRange: return "ParameterOutOfRange";
    case ErrorKind::QuadratureFailure: return "QuadratureFailure";
    case ErrorKind::ZeroAttractiveness: return "ZeroAttractiveness";
    case ErrorKind::DensitySamplingFailure: return "DensitySamplingFailure";
    case ErrorKind::CouplingViolation: return "CouplingViolation";
    case ErrorKind::EmptyGraph: return "EmptyGraph";
    case ErrorKind::BoundaryPoint: return "BoundaryPoint";
    case ErrorKind::NonConvergence: return "NonConvergence";
    case ErrorKind::ZeroKernelRow: return "ZeroKernelRow";
    case ErrorKind::DegenerateMass: return "DegenerateMass";
    case ErrorKind::NoSignChange: return "NoSignChange";
    case ErrorKind::DegreeBelowM: return "DegreeBelowM";
    case ErrorKind::EmptyHistogram: return "EmptyHistogram";
    case ErrorKind::WrongPhase: return "WrongPhase";
    case ErrorKind::IntervalOutOfRange: return "IntervalOutOfRange";
    case ErrorKind::InvalidSeedGraph: return "InvalidSeedGraph";
    case ErrorKind::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a kind so callers (the CLI in
/// particular) can map it to an exit code without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Raised when the per-cell domination Y^dust_i <= Y_i breaks in a coupled run.
class CouplingViolation : public Error {
 public:
  CouplingViolation(long long step, int cell, long long dustbin_total, long long graph_total)
      : Error(ErrorKind::CouplingViolation,
              "step " + std::to_string(step) + ", cell " + std::to_string(cell) + ": dustbin " +
                  std::to_string(dustbin_total) + " > graph " + std::to_string(graph_total)),
        step_(step),
        cell_(cell) {}

  long long step() const noexcept { return step_; }
  int cell() const noexcept { return cell_; }

 private:
  long long step_;
  int cell_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace gpa
