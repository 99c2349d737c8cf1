#pragma once

#include <memory>
#include <variant>
#include <vector>

#include "cmrac/errors.hpp"

namespace cmrac {

// Power-law envelopes with exponent below one have unbounded derivative as
// t -> 0. When clamping is enabled, controller-side derivative evaluation is
// frozen at this floor instead of rejecting the envelope.
inline constexpr double kTimeFloor = 1e-6;

struct EnvelopeSample {
  double value = 0.0;
  double derivative = 0.0;
};

// Prescribed performance function
//   phi(t) = (phi0 - phi_inf) / (1 + kappa t^nu) + phi_inf,
// strictly decreasing from phi0 to phi_inf.
struct PerformanceFunction {
  double phi0 = 1.0;
  double phi_inf = 0.1;
  double kappa = 1.0;
  double nu = 1.0;

  void validate() const;
  double value(double t) const;
  double derivative(double t) const;  // closed form; -inf at t=0 when nu < 1
  bool operator==(const PerformanceFunction&) const = default;
};

// Time to reach threshold eps:
//   tau = [ (1/kappa) ( (phi0 - phi_inf)/(eps - phi_inf) - 1 ) ]^(1/nu).
// Throws ThresholdOutOfRange unless phi_inf < eps < phi0.
double convergence_time(const PerformanceFunction& pf, double eps);

// Scalar time-varying bound built from a small closed-form algebra. Every
// kind carries an exact derivative; no numeric differentiation anywhere.
class Envelope {
 public:
  struct Constant {
    double c = 0.0;
    bool operator==(const Constant&) const = default;
  };
  struct Ppf {
    PerformanceFunction pf;
    bool operator==(const Ppf&) const = default;
  };
  struct Exponential {  // a e^{bt} + c
    double a = 0.0, b = 0.0, c = 0.0;
    bool operator==(const Exponential&) const = default;
  };
  struct Sinusoid {  // a sin(omega t + phase) + offset
    double a = 0.0, omega = 0.0, phase = 0.0, offset = 0.0;
    bool operator==(const Sinusoid&) const = default;
  };
  struct Window {  // inner on [t_on, t_off], zero outside
    std::shared_ptr<const Envelope> inner;
    double t_on = 0.0, t_off = 0.0;
  };
  struct Sum {
    std::vector<Envelope> terms;
  };
  // Pointwise difference left - right. Internal node used for derived error
  // envelopes; it is not part of the scenario-file grammar.
  struct Difference {
    std::shared_ptr<const Envelope> left, right;
  };

  Envelope() : node_(Constant{0.0}) {}
  Envelope(Constant c) : node_(c) {}
  Envelope(Ppf p) : node_(p) {}
  Envelope(PerformanceFunction pf) : node_(Ppf{pf}) {}
  Envelope(Exponential e) : node_(e) {}
  Envelope(Sinusoid s) : node_(s) {}
  Envelope(Window w) : node_(std::move(w)) {}
  Envelope(Sum s) : node_(std::move(s)) {}
  Envelope(Difference d) : node_(std::move(d)) {}

  static Envelope constant(double c) { return Envelope(Constant{c}); }
  static Envelope ppf(double phi0, double phi_inf, double kappa, double nu) {
    return Envelope(Ppf{PerformanceFunction{phi0, phi_inf, kappa, nu}});
  }
  static Envelope windowed(Envelope inner, double t_on, double t_off) {
    return Envelope(Window{std::make_shared<const Envelope>(std::move(inner)), t_on, t_off});
  }
  static Envelope sum(std::vector<Envelope> terms) { return Envelope(Sum{std::move(terms)}); }
  static Envelope difference(Envelope left, Envelope right) {
    return Envelope(Difference{std::make_shared<const Envelope>(std::move(left)),
                               std::make_shared<const Envelope>(std::move(right))});
  }

  // Value and exact derivative. Derivatives of sub-unity-exponent power laws
  // follow the closed form even where it diverges (no throw).
  EnvelopeSample eval(double t) const;
  double value(double t) const { return eval(t).value; }

  // Evaluation for control use: rejects a divergent derivative near t = 0
  // (DerivativeSingularity) unless clamp_floor is set, in which case the
  // derivative is evaluated no earlier than kTimeFloor.
  EnvelopeSample eval_for_control(double t, bool clamp_floor) const;

  // True if any node is a power-law envelope with exponent < 1 (these have a
  // derivative singularity at t = 0).
  bool has_singular_derivative() const;

  bool operator==(const Envelope& rhs) const;

  template <typename Visitor>
  auto visit(Visitor&& v) const {
    return std::visit(std::forward<Visitor>(v), node_);
  }

 private:
  std::variant<Constant, Ppf, Exponential, Sinusoid, Window, Sum, Difference> node_;
};

// Evaluates a vector-valued signal (one envelope per component) at t.
std::vector<double> eval_values(const std::vector<Envelope>& signal, double t);

// State, input and reference-trajectory bounds for a scenario. phi_e is the
// derived (or directly given) error envelope; phi_x = phi_e + chi_r always.
struct ConstraintSet {
  Envelope phi_x;
  Envelope phi_u;
  Envelope chi_r;
  Envelope phi_e;
  bool clamp_floor = false;  // power-law derivative policy near t = 0
  bool phi_e_given = false;  // scenario supplied phi_e (else phi_x)
};

// Error envelope phi_e = phi_x - chi_r, validated strictly positive at every
// grid point. Throws NonPositiveEnvelope carrying the first violating time.
Envelope derive_error_envelope(const Envelope& phi_x, const Envelope& chi_r,
                               const std::vector<double>& grid);

// Uniform grid {0, h, 2h, ..., <= t_end} (always includes 0; includes t_end
// when it is a multiple of h up to round-off).
std::vector<double> uniform_grid(double t_end, double h);

}  // namespace cmrac
