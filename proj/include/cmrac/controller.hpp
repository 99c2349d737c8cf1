#pragma once

#include "cmrac/linalg.hpp"

namespace cmrac {

// Hard ceiling on the Frobenius norm of any projected adaptation rate. Only
// reachable when measurement noise drives the barrier denominator near its
// guarded zero crossing; healthy trajectories stay orders of magnitude below.
inline constexpr double kRateNormCap = 1e3;

struct ControllerConfig {
  Matrix gamma_x;               // m x m symmetric positive definite adaptation gain
  double k_bar_x = 1.0;         // Frobenius bound enforced on K_hat_x
  Matrix k_r;                   // m x m feedforward gain (from matched_gains)
  double proj_epsilon = 0.1;    // projection boundary-layer width, in (0, 1]
  double denom_floor = 1e-9;    // relative barrier-denominator floor, in (0, 1e-6]

  // Effective radius where the projection starts acting: f = 0 surface.
  double k_bar_eff() const;
  void validate() const;
};

struct SaturationResult {
  Matrix u;        // applied input, ||u|| <= phi_u
  Matrix delta_u;  // u - v (saturation deficiency)
  bool saturated = false;
};

// Magnitude saturation: u = v when ||v|| <= phi_u, else phi_u * v / ||v||.
// Direction is preserved exactly; ||delta_u|| = max(0, ||v|| - phi_u).
SaturationResult saturate(const Matrix& v, double phi_u);

// Auxiliary control v = K_hat_x x + K_r r - (phi_e_dot / phi_e) B_dagger e.
Matrix auxiliary_input(const Matrix& k_hat_x, const Matrix& k_r, const Matrix& x,
                       const Matrix& r, double phi_e, double phi_e_dot,
                       const Matrix& b_dagger, const Matrix& e);

// Barrier value V_e = log( phi'^2 / (phi'^2 - e^T P e) ), defined while
// e^T P e < phi'^2. Throws BarrierBreach when the denominator reaches the
// floor denom_floor_rel * phi'^2.
double tvblf_value(const Matrix& e, const Matrix& p, double phi_e_prime,
                   double denom_floor_rel, double t_event);

// Smooth Frobenius-ball projection. Returns y untouched while
// f(theta) <= 0 or the rate points inward; otherwise removes f * (radial
// component), which zeroes the outward radial rate at ||theta|| = k_bar and
// reverses it beyond.
Matrix project(const Matrix& theta, const Matrix& y, double k_bar, double eps_p);

// Barrier-weighted adaptation rate
//   raw = -Gamma_x B^T P e x^T / (phi'^2 - e^T P e),
// passed through the projection. `denominator` must be positive (callers
// apply flooring policy). The result norm is capped at kRateNormCap.
Matrix adaptive_rate(const Matrix& k_hat_x, const Matrix& e, const Matrix& x,
                     const Matrix& p, const Matrix& b, const Matrix& gamma_x,
                     double denominator, double k_bar, double eps_p);

struct MatchedGains {
  Matrix k_x;         // m x n, least-squares solution of B K_x = A_r - A
  Matrix k_r;         // m x m, least-squares solution of B K_r = B_r
  double residual_a;  // || (I - B B^dagger)(A_r - A) ||_F
  double residual_b;  // || (I - B B^dagger) B_r ||_F
};

// Ideal-gain computation. Zero residuals certify exact model matching;
// nonzero residual_a quantifies the unmatched part of the plant gap.
MatchedGains matched_gains(const Matrix& a, const Matrix& a_r, const Matrix& b,
                           const Matrix& b_r);

}  // namespace cmrac
