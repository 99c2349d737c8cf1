#pragma once

#include <stdexcept>
#include <string>

namespace cmrac {

// Base class for all library errors. Subclasses distinguish failure modes so
// callers can map them to exit codes or recover selectively.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DimensionMismatch : Error {
  using Error::Error;
};

// Linear system could not be solved (singular pivot, or a Lyapunov solve whose
// solution is not positive definite, i.e. the input matrix is not Hurwitz).
struct SingularSystem : Error {
  using Error::Error;
};

struct RankDeficient : Error {
  using Error::Error;
};

struct NotSymmetric : Error {
  using Error::Error;
};

struct NotPositiveDefinite : Error {
  using Error::Error;
};

struct NonFiniteValue : Error {
  using Error::Error;
};

// Envelope derivative requested at a point where the closed form is singular
// (power-law envelopes with exponent below one at t near zero).
struct DerivativeSingularity : Error {
  using Error::Error;
};

struct NonPositiveEnvelope : Error {
  NonPositiveEnvelope(const std::string& msg, double t_violation)
      : Error(msg), t(t_violation) {}
  double t;
};

struct ThresholdOutOfRange : Error {
  using Error::Error;
};

// Tracking error reached the barrier boundary; carries the event time.
struct BarrierBreach : Error {
  BarrierBreach(const std::string& msg, double t_event)
      : Error(msg), t(t_event) {}
  double t;
};

struct NonFiniteState : Error {
  NonFiniteState(const std::string& msg, double t_event)
      : Error(msg), t(t_event) {}
  double t;
};

struct EmptyWindow : Error {
  using Error::Error;
};

// Scenario file could not be parsed (syntax, unknown key, wrong type).
struct ParseError : Error {
  using Error::Error;
};

// Scenario parsed but violates a semantic requirement (dimensions, bounds,
// stability of the reference model, ...).
struct ValidationError : Error {
  using Error::Error;
};

}  // namespace cmrac
