#pragma once

#include <string>
#include <vector>

#include "cmrac/envelope.hpp"
#include "cmrac/linalg.hpp"

namespace cmrac {

// Regime classification threshold on alpha1's sign.
inline constexpr double kAlphaSignTol = 1e-12;

// Decomposed budget coefficients:
//   alpha1 = K_bar_x - eta, alpha2 = ||B_dagger||,
//   beta   = eta * sup chi_r + K_bar_r * r_bar.
struct FeasibilityCoefficients {
  double alpha1 = 0.0;
  double alpha2 = 0.0;
  double beta = 0.0;
  double eta = 0.0;
  double k_bar_x = 0.0;
  double k_bar_r = 0.0;
  double r_bar = 0.0;
  double chi_r_sup = 0.0;
};

FeasibilityCoefficients compute_coefficients(const SpectralConstants& sc, double k_bar_x,
                                             double k_bar_r, double r_bar, double chi_r_sup);

enum class Regime { Case2_1, Case2_2, AlphaZero };
Regime classify_regime(const FeasibilityCoefficients& c);
std::string to_string(Regime r);

enum class DominantTerm { StateEnvelope, Rate, Offset };
std::string to_string(DominantTerm d);

enum class Verdict { Feasible, Infeasible };
std::string to_string(Verdict v);

// Pointwise certificate over a grid. The certified right-hand side is
//   rhs(t) = phi_x(t) (K_bar_x - eta) + |phi_e_dot(t)| ||B_dagger||
//          + eta chi_r(t) + K_bar_r r_bar + d_bar / ||B||,
// and margin(t) = phi_u(t) - rhs(t). Dominant-term attribution uses the
// decomposed budget {alpha1 phi_e, alpha2 |phi_e_dot|, beta}, which is a
// different (looser) presentation; decomposition_max_gap records how far the
// two right-hand sides drift apart on the grid.
struct FeasibilityReport {
  Verdict verdict = Verdict::Infeasible;
  std::vector<double> grid;
  std::vector<double> phi_u;
  std::vector<double> rhs;
  std::vector<double> margin;
  std::vector<DominantTerm> dominant;
  double min_margin = 0.0;
  double argmin_t = 0.0;
  Regime regime = Regime::AlphaZero;
  double disturbance_bound = 0.0;  // d_bar actually used
  double norm_b = 0.0;
  bool decomposition_differs = false;
  double decomposition_max_gap = 0.0;
};

// d_bar = 0 certifies the undisturbed condition; d_bar > 0 adds d_bar/||B||.
FeasibilityReport check_c1(const FeasibilityCoefficients& c, const ConstraintSet& cs,
                           const std::vector<double>& grid, double d_bar, double norm_b);

struct SteadyStateResult {
  bool pass = false;
  double margin = 0.0;  // phi_u_inf - alpha1 phi_e_inf - beta
};

// Asymptotic reduction: pass iff phi_u_inf > alpha1 * phi_e_inf + beta.
SteadyStateResult steady_state_check(const FeasibilityCoefficients& c, double phi_e_inf,
                                     double phi_u_inf);

struct InputOnlyResult {
  bool pass = false;
  double min_margin = 0.0;
  double argmin_t = 0.0;
};

// Input-constraint-only budget: phi_u(t) > eta chi_r(t) + K_bar_r r_bar.
InputOnlyResult input_only_check(const FeasibilityCoefficients& c, const Envelope& chi_r,
                                 const Envelope& phi_u, const std::vector<double>& grid);

struct ModelDistance {
  double distance = 0.0;  // ||A_r - A|| (spectral)
  bool exceeds_eta = false;
};

// Diagnostic: compares the model gap against the dissipation level eta.
ModelDistance model_distance_check(const Matrix& a, const Matrix& a_r, double eta);

// CSV rows: t, phi_u, rhs, margin, dominant_term.
std::string feasibility_csv(const FeasibilityReport& rep);

// Human-readable summary block.
std::string feasibility_summary(const FeasibilityReport& rep);

}  // namespace cmrac
