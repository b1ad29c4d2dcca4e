#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace kcone {

enum class Errc {
  NotSymmetric,
  NearSingular,
  DegenerateRank,
  DimensionMismatch,
  NoConvergence,
  IdenticalPoints,
  DomainViolation,
  EmptyDomain,
  AllPairsDegenerate,
  NonFiniteDerivative,
  DomainExit,
  IntegrationFailure,
  StepUnderflow,
  NonFiniteState,
  SyntaxError,
  UnknownIdentifier,
  ArityMismatch,
  BadParameter,
  InvalidParameter,
  TrajectoryTooShort,
  TooFewPoints,
  NotConverged,
  RankNotTwo,
  PreconditionOrdered,
  PreconditionUnordered,
  BackwardDomainExit,
  SchemaError,
  IoError,
};

constexpr std::string_view errc_name(Errc c) {
  switch (c) {
    case Errc::NotSymmetric: return "NotSymmetric";
    case Errc::NearSingular: return "NearSingular";
    case Errc::DegenerateRank: return "DegenerateRank";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::NoConvergence: return "NoConvergence";
    case Errc::IdenticalPoints: return "IdenticalPoints";
    case Errc::DomainViolation: return "DomainViolation";
    case Errc::EmptyDomain: return "EmptyDomain";
    case Errc::AllPairsDegenerate: return "AllPairsDegenerate";
    case Errc::NonFiniteDerivative: return "NonFiniteDerivative";
    case Errc::DomainExit: return "DomainExit";
    case Errc::IntegrationFailure: return "IntegrationFailure";
    case Errc::StepUnderflow: return "StepUnderflow";
    case Errc::NonFiniteState: return "NonFiniteState";
    case Errc::SyntaxError: return "SyntaxError";
    case Errc::UnknownIdentifier: return "UnknownIdentifier";
    case Errc::ArityMismatch: return "ArityMismatch";
    case Errc::BadParameter: return "BadParameter";
    case Errc::InvalidParameter: return "InvalidParameter";
    case Errc::TrajectoryTooShort: return "TrajectoryTooShort";
    case Errc::TooFewPoints: return "TooFewPoints";
    case Errc::NotConverged: return "NotConverged";
    case Errc::RankNotTwo: return "RankNotTwo";
    case Errc::PreconditionOrdered: return "PreconditionOrdered";
    case Errc::PreconditionUnordered: return "PreconditionUnordered";
    case Errc::BackwardDomainExit: return "BackwardDomainExit";
    case Errc::SchemaError: return "SchemaError";
    case Errc::IoError: return "IoError";
  }
  return "Unknown";
}

/// Every failure in the library surfaces as this exception; `code()` tells
/// callers which contract was violated. Parser errors additionally carry the
/// 0-based character offset, schema errors a JSON pointer.
class Error : public std::runtime_error {
 public:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Error(Errc code, const std::string& what, std::size_t position)
      : std::runtime_error(std::string(errc_name(code)) + " at " + std::to_string(position) +
                           ": " + what),
        code_(code),
        position_(position) {}

  Error(Errc code, const std::string& what, std::string pointer)
      : std::runtime_error(std::string(errc_name(code)) + " at " + pointer + ": " + what),
        code_(code),
        pointer_(std::move(pointer)) {}

  Errc code() const noexcept { return code_; }
  std::size_t position() const noexcept { return position_; }
  const std::string& pointer() const noexcept { return pointer_; }

 private:
  Errc code_;
  std::size_t position_ = npos;
  std::string pointer_;
};

}  // namespace kcone
