#include "cmrac/feasibility.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "cmrac/csv.hpp"

namespace cmrac {

FeasibilityCoefficients compute_coefficients(const SpectralConstants& sc, double k_bar_x,
                                             double k_bar_r, double r_bar, double chi_r_sup) {
  if (!(k_bar_x > 0.0) || !(k_bar_r > 0.0) || !(r_bar >= 0.0) || !(chi_r_sup >= 0.0))
    throw ValidationError("compute_coefficients: bounds must be positive (r_bar, chi_r_sup >= 0)");
  FeasibilityCoefficients c;
  c.alpha1 = k_bar_x - sc.eta;
  c.alpha2 = sc.norm_B_dagger;
  c.beta = sc.eta * chi_r_sup + k_bar_r * r_bar;
  c.eta = sc.eta;
  c.k_bar_x = k_bar_x;
  c.k_bar_r = k_bar_r;
  c.r_bar = r_bar;
  c.chi_r_sup = chi_r_sup;
  return c;
}

Regime classify_regime(const FeasibilityCoefficients& c) {
  if (c.alpha1 > kAlphaSignTol) return Regime::Case2_1;
  if (c.alpha1 < -kAlphaSignTol) return Regime::Case2_2;
  return Regime::AlphaZero;
}

std::string to_string(Regime r) {
  switch (r) {
    case Regime::Case2_1: return "case2.1";
    case Regime::Case2_2: return "case2.2";
    case Regime::AlphaZero: return "alpha-zero";
  }
  return "?";
}

std::string to_string(DominantTerm d) {
  switch (d) {
    case DominantTerm::StateEnvelope: return "state-envelope";
    case DominantTerm::Rate: return "rate";
    case DominantTerm::Offset: return "offset";
  }
  return "?";
}

std::string to_string(Verdict v) { return v == Verdict::Feasible ? "Feasible" : "Infeasible"; }

FeasibilityReport check_c1(const FeasibilityCoefficients& c, const ConstraintSet& cs,
                           const std::vector<double>& grid, double d_bar, double norm_b) {
  if (grid.empty()) throw ValidationError("check_c1: empty grid");
  if (!(d_bar >= 0.0)) throw ValidationError("check_c1: d_bar must be nonnegative");
  if (d_bar > 0.0 && !(norm_b > 0.0))
    throw ValidationError("check_c1: norm_b must be positive when d_bar > 0");

  FeasibilityReport rep;
  rep.grid = grid;
  rep.disturbance_bound = d_bar;
  rep.norm_b = norm_b;
  rep.regime = classify_regime(c);
  const double d_term = d_bar > 0.0 ? d_bar / norm_b : 0.0;

  rep.phi_u.reserve(grid.size());
  rep.rhs.reserve(grid.size());
  rep.margin.reserve(grid.size());
  rep.dominant.reserve(grid.size());

  double min_margin = std::numeric_limits<double>::infinity();
  double argmin_t = grid.front();
  double max_gap = 0.0;

  for (double t : grid) {
    const EnvelopeSample pe = cs.phi_e.eval_for_control(t, cs.clamp_floor);
    const double phi_x = cs.phi_x.value(t);
    const double chi_r = cs.chi_r.value(t);
    const double phi_u = cs.phi_u.value(t);

    const double rate_term = c.alpha2 * std::abs(pe.derivative);
    const double rhs = phi_x * (c.k_bar_x - c.eta) + rate_term + c.eta * chi_r +
                       c.k_bar_r * c.r_bar + d_term;
    const double margin = phi_u - rhs;

    // Attribution uses the decomposed budget, not the certified rhs.
    const double part_state = c.alpha1 * pe.value;
    const double part_offset = c.beta;
    DominantTerm dom = DominantTerm::StateEnvelope;
    double best = part_state;
    if (rate_term > best) {
      best = rate_term;
      dom = DominantTerm::Rate;
    }
    if (part_offset > best) dom = DominantTerm::Offset;

    const double rhs_decomp = part_state + rate_term + part_offset + d_term;
    max_gap = std::max(max_gap, std::abs(rhs - rhs_decomp));

    rep.phi_u.push_back(phi_u);
    rep.rhs.push_back(rhs);
    rep.margin.push_back(margin);
    rep.dominant.push_back(dom);
    if (margin < min_margin) {
      min_margin = margin;
      argmin_t = t;
    }
  }

  rep.min_margin = min_margin;
  rep.argmin_t = argmin_t;
  rep.verdict = min_margin > 0.0 ? Verdict::Feasible : Verdict::Infeasible;
  rep.decomposition_max_gap = max_gap;
  rep.decomposition_differs = max_gap > 1e-12;
  return rep;
}

SteadyStateResult steady_state_check(const FeasibilityCoefficients& c, double phi_e_inf,
                                     double phi_u_inf) {
  if (!(phi_e_inf > 0.0) || !(phi_u_inf > 0.0))
    throw ValidationError("steady_state_check: asymptotes must be positive");
  SteadyStateResult r;
  r.margin = phi_u_inf - c.alpha1 * phi_e_inf - c.beta;
  r.pass = r.margin > 0.0;
  return r;
}

InputOnlyResult input_only_check(const FeasibilityCoefficients& c, const Envelope& chi_r,
                                 const Envelope& phi_u, const std::vector<double>& grid) {
  if (grid.empty()) throw ValidationError("input_only_check: empty grid");
  InputOnlyResult r;
  r.min_margin = std::numeric_limits<double>::infinity();
  for (double t : grid) {
    const double margin = phi_u.value(t) - (c.eta * chi_r.value(t) + c.k_bar_r * c.r_bar);
    if (margin < r.min_margin) {
      r.min_margin = margin;
      r.argmin_t = t;
    }
  }
  r.pass = r.min_margin > 0.0;
  return r;
}

ModelDistance model_distance_check(const Matrix& a, const Matrix& a_r, double eta) {
  if (a.rows() != a_r.rows() || a.cols() != a_r.cols())
    throw DimensionMismatch("model_distance_check: A and A_r shapes disagree");
  ModelDistance d;
  d.distance = spectral_norm(a_r - a);
  d.exceeds_eta = d.distance > eta;
  return d;
}

std::string feasibility_csv(const FeasibilityReport& rep) {
  std::ostringstream os;
  os << "t,phi_u,rhs,margin,dominant_term\n";
  for (std::size_t k = 0; k < rep.grid.size(); ++k) {
    os << format_real(rep.grid[k]) << ',' << format_real(rep.phi_u[k]) << ','
       << format_real(rep.rhs[k]) << ',' << format_real(rep.margin[k]) << ','
       << to_string(rep.dominant[k]) << '\n';
  }
  return os.str();
}

std::string feasibility_summary(const FeasibilityReport& rep) {
  std::ostringstream os;
  os << "verdict: " << to_string(rep.verdict) << '\n'
     << "min margin: " << format_real(rep.min_margin) << " at t = " << format_real(rep.argmin_t)
     << '\n'
     << "regime: " << to_string(rep.regime) << '\n'
     << "disturbance bound: " << format_real(rep.disturbance_bound) << '\n';
  if (rep.decomposition_differs) {
    os << "note: dominant-term attribution uses the decomposed budget, which differs from the "
          "certified right-hand side on this grid (max gap "
       << format_real(rep.decomposition_max_gap) << ")\n";
  }
  return os.str();
}

}  // namespace cmrac
