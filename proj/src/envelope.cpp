#include "cmrac/envelope.hpp"

#include <cmath>
#include <string>

namespace cmrac {

void PerformanceFunction::validate() const {
  if (!(std::isfinite(phi0) && std::isfinite(phi_inf) && std::isfinite(kappa) && std::isfinite(nu)))
    throw NonFiniteValue("PerformanceFunction: non-finite parameter");
  if (!(phi0 > phi_inf))
    throw ValidationError("PerformanceFunction: requires phi0 > phi_inf");
  if (!(phi_inf > 0.0))
    throw ValidationError("PerformanceFunction: requires phi_inf > 0");
  if (!(kappa > 0.0))
    throw ValidationError("PerformanceFunction: requires kappa > 0");
  if (!(nu > 0.0))
    throw ValidationError("PerformanceFunction: requires nu > 0");
}

double PerformanceFunction::value(double t) const {
  return (phi0 - phi_inf) / (1.0 + kappa * std::pow(t, nu)) + phi_inf;
}

double PerformanceFunction::derivative(double t) const {
  const double tn = std::pow(t, nu);
  const double denom = 1.0 + kappa * tn;
  // d/dt [ (phi0-phi_inf)(1 + kappa t^nu)^-1 ] ; t^(nu-1) handles all nu > 0,
  // including the divergent nu < 1 case at t = 0 (yields -inf).
  return -(phi0 - phi_inf) * kappa * nu * std::pow(t, nu - 1.0) / (denom * denom);
}

double convergence_time(const PerformanceFunction& pf, double eps) {
  pf.validate();
  if (!(eps > pf.phi_inf && eps < pf.phi0))
    throw ThresholdOutOfRange("convergence_time: eps must lie in (phi_inf, phi0)");
  const double ratio = (pf.phi0 - pf.phi_inf) / (eps - pf.phi_inf) - 1.0;
  return std::pow(ratio / pf.kappa, 1.0 / pf.nu);
}

namespace {

struct EvalVisitor {
  double t;

  EnvelopeSample operator()(const Envelope::Constant& c) const { return {c.c, 0.0}; }
  EnvelopeSample operator()(const Envelope::Ppf& p) const {
    return {p.pf.value(t), p.pf.derivative(t)};
  }
  EnvelopeSample operator()(const Envelope::Exponential& e) const {
    const double ebt = std::exp(e.b * t);
    return {e.a * ebt + e.c, e.a * e.b * ebt};
  }
  EnvelopeSample operator()(const Envelope::Sinusoid& s) const {
    return {s.a * std::sin(s.omega * t + s.phase) + s.offset,
            s.a * s.omega * std::cos(s.omega * t + s.phase)};
  }
  EnvelopeSample operator()(const Envelope::Window& w) const {
    if (t >= w.t_on && t <= w.t_off) return w.inner->eval(t);
    return {0.0, 0.0};
  }
  EnvelopeSample operator()(const Envelope::Sum& s) const {
    EnvelopeSample out;
    for (const auto& term : s.terms) {
      const EnvelopeSample e = term.eval(t);
      out.value += e.value;
      out.derivative += e.derivative;
    }
    return out;
  }
  EnvelopeSample operator()(const Envelope::Difference& d) const {
    const EnvelopeSample l = d.left->eval(t);
    const EnvelopeSample r = d.right->eval(t);
    return {l.value - r.value, l.derivative - r.derivative};
  }
};

}  // namespace

EnvelopeSample Envelope::eval(double t) const { return visit(EvalVisitor{t}); }

bool Envelope::has_singular_derivative() const {
  return visit([](const auto& node) -> bool {
    using T = std::decay_t<decltype(node)>;
    if constexpr (std::is_same_v<T, Ppf>) {
      return node.pf.nu < 1.0;
    } else if constexpr (std::is_same_v<T, Window>) {
      return node.inner->has_singular_derivative();
    } else if constexpr (std::is_same_v<T, Sum>) {
      for (const auto& term : node.terms)
        if (term.has_singular_derivative()) return true;
      return false;
    } else if constexpr (std::is_same_v<T, Difference>) {
      return node.left->has_singular_derivative() || node.right->has_singular_derivative();
    } else {
      return false;
    }
  });
}

EnvelopeSample Envelope::eval_for_control(double t, bool clamp_floor) const {
  if (t < kTimeFloor && has_singular_derivative()) {
    if (!clamp_floor)
      throw DerivativeSingularity(
          "envelope derivative diverges near t = 0 (exponent < 1); enable t_floor_clamp to "
          "freeze it at the floor");
    const EnvelopeSample at_floor = eval(kTimeFloor);
    return {value(t), at_floor.derivative};
  }
  return eval(t);
}

bool Envelope::operator==(const Envelope& rhs) const {
  return visit([&rhs](const auto& a) -> bool {
    using T = std::decay_t<decltype(a)>;
    return rhs.visit([&a](const auto& b) -> bool {
      using U = std::decay_t<decltype(b)>;
      if constexpr (!std::is_same_v<T, U>) {
        return false;
      } else if constexpr (std::is_same_v<T, Envelope::Window>) {
        return a.t_on == b.t_on && a.t_off == b.t_off && *a.inner == *b.inner;
      } else if constexpr (std::is_same_v<T, Envelope::Sum>) {
        if (a.terms.size() != b.terms.size()) return false;
        for (std::size_t i = 0; i < a.terms.size(); ++i)
          if (!(a.terms[i] == b.terms[i])) return false;
        return true;
      } else if constexpr (std::is_same_v<T, Envelope::Difference>) {
        return *a.left == *b.left && *a.right == *b.right;
      } else {
        return a == b;
      }
    });
  });
}

std::vector<double> eval_values(const std::vector<Envelope>& signal, double t) {
  std::vector<double> out(signal.size());
  for (std::size_t i = 0; i < signal.size(); ++i) out[i] = signal[i].value(t);
  return out;
}

Envelope derive_error_envelope(const Envelope& phi_x, const Envelope& chi_r,
                               const std::vector<double>& grid) {
  Envelope diff = Envelope::difference(phi_x, chi_r);
  for (double t : grid) {
    const double v = diff.value(t);
    if (!(v > 0.0))
      throw NonPositiveEnvelope(
          "error envelope not strictly positive at t = " + std::to_string(t), t);
  }
  return diff;
}

std::vector<double> uniform_grid(double t_end, double h) {
  if (!(h > 0.0) || !(t_end >= 0.0) || !std::isfinite(t_end) || !std::isfinite(h))
    throw ValidationError("uniform_grid: requires t_end >= 0 and h > 0");
  std::vector<double> g;
  const std::size_t n = static_cast<std::size_t>(std::floor(t_end / h + 1e-9));
  g.reserve(n + 1);
  for (std::size_t k = 0; k <= n; ++k) g.push_back(static_cast<double>(k) * h);
  return g;
}

}  // namespace cmrac
