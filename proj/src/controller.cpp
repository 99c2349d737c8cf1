#include "cmrac/controller.hpp"

#include <cmath>
#include <string>

namespace cmrac {

double ControllerConfig::k_bar_eff() const { return k_bar_x / std::sqrt(1.0 + proj_epsilon); }

void ControllerConfig::validate() const {
  if (gamma_x.rows() != gamma_x.cols() || gamma_x.rows() == 0)
    throw DimensionMismatch("ControllerConfig: gamma_x must be square");
  if (!is_symmetric(gamma_x) || lambda_min(gamma_x) <= 0.0)
    throw NotPositiveDefinite("ControllerConfig: gamma_x must be symmetric positive definite");
  if (!(k_bar_x > 0.0)) throw ValidationError("ControllerConfig: k_bar_x must be positive");
  if (!(proj_epsilon > 0.0 && proj_epsilon <= 1.0))
    throw ValidationError("ControllerConfig: proj_epsilon must lie in (0, 1]");
  if (!(denom_floor > 0.0 && denom_floor <= 1e-6))
    throw ValidationError("ControllerConfig: denom_floor must lie in (0, 1e-6]");
  if (k_r.rows() != gamma_x.rows() || k_r.cols() != gamma_x.rows())
    throw DimensionMismatch("ControllerConfig: k_r must be m x m");
}

SaturationResult saturate(const Matrix& v, double phi_u) {
  if (v.cols() != 1) throw DimensionMismatch("saturate: v must be a column vector");
  if (!(phi_u > 0.0)) throw ValidationError("saturate: phi_u must be positive");
  SaturationResult out;
  const double vn = norm2(v);
  if (vn <= phi_u) {
    out.u = v;
    out.delta_u = Matrix::zero(v.rows(), 1);
    out.saturated = false;
  } else {
    out.u = v * (phi_u / vn);
    out.delta_u = out.u - v;
    out.saturated = true;
  }
  return out;
}

Matrix auxiliary_input(const Matrix& k_hat_x, const Matrix& k_r, const Matrix& x,
                       const Matrix& r, double phi_e, double phi_e_dot,
                       const Matrix& b_dagger, const Matrix& e) {
  if (!(phi_e > 0.0)) throw ValidationError("auxiliary_input: phi_e must be positive");
  Matrix v = k_hat_x * x + k_r * r;
  v -= b_dagger * e * (phi_e_dot / phi_e);
  return v;
}

double tvblf_value(const Matrix& e, const Matrix& p, double phi_e_prime,
                   double denom_floor_rel, double t_event) {
  const double bound = phi_e_prime * phi_e_prime;
  const double quad = dot(e, p * e);
  const double denom = bound - quad;
  if (denom <= denom_floor_rel * bound)
    throw BarrierBreach("tracking error reached the barrier at t = " + std::to_string(t_event),
                        t_event);
  return std::log(bound / denom);
}

Matrix project(const Matrix& theta, const Matrix& y, double k_bar, double eps_p) {
  if (theta.rows() != y.rows() || theta.cols() != y.cols())
    throw DimensionMismatch("project: theta and y shapes disagree");
  if (!(k_bar > 0.0) || !(eps_p > 0.0))
    throw ValidationError("project: k_bar and eps_p must be positive");

  const double k_eff_sq = k_bar * k_bar / (1.0 + eps_p);
  const double norm_sq = frobenius_norm(theta) * frobenius_norm(theta);
  const double f = (norm_sq - k_eff_sq) / (eps_p * k_eff_sq);
  if (f <= 0.0) return y;

  // grad f = 2 theta / (eps_p k_eff^2); inner products reduce to <theta, .>.
  double inner = 0.0;
  for (std::size_t i = 0; i < theta.rows(); ++i)
    for (std::size_t j = 0; j < theta.cols(); ++j) inner += theta(i, j) * y(i, j);
  if (inner <= 0.0) return y;

  // y - f <grad f, y> grad f / ||grad f||^2 = y - f <theta, y> theta / ||theta||^2.
  Matrix out = y;
  const double scale = f * inner / norm_sq;
  for (std::size_t i = 0; i < theta.rows(); ++i)
    for (std::size_t j = 0; j < theta.cols(); ++j) out(i, j) -= scale * theta(i, j);
  return out;
}

Matrix adaptive_rate(const Matrix& k_hat_x, const Matrix& e, const Matrix& x,
                     const Matrix& p, const Matrix& b, const Matrix& gamma_x,
                     double denominator, double k_bar, double eps_p) {
  if (!(denominator > 0.0))
    throw ValidationError("adaptive_rate: denominator must be positive");
  // raw = -Gamma B^T P e x^T / denominator  (m x n via outer product)
  const Matrix bpe = gamma_x * (b.transpose() * (p * e));  // m x 1
  const std::size_t m = bpe.rows(), n = x.rows();
  Matrix raw(m, n);
  const double inv_d = 1.0 / denominator;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) raw(i, j) = -bpe(i, 0) * x(j, 0) * inv_d;

  Matrix projected = project(k_hat_x, raw, k_bar, eps_p);
  const double pn = frobenius_norm(projected);
  if (pn > kRateNormCap) projected *= kRateNormCap / pn;
  return projected;
}

MatchedGains matched_gains(const Matrix& a, const Matrix& a_r, const Matrix& b,
                           const Matrix& b_r) {
  if (a.rows() != a.cols() || a_r.rows() != a_r.cols() || a.rows() != a_r.rows())
    throw DimensionMismatch("matched_gains: A and A_r must be square of equal size");
  if (b.rows() != a.rows() || b_r.rows() != a.rows() || b.cols() != b_r.cols())
    throw DimensionMismatch("matched_gains: B / B_r shapes inconsistent with A");

  const Matrix dagger = left_pseudo_inverse(b);
  const Matrix gap = a_r - a;
  MatchedGains g;
  g.k_x = dagger * gap;
  g.k_r = dagger * b_r;
  g.residual_a = frobenius_norm(gap - b * g.k_x);
  g.residual_b = frobenius_norm(b_r - b * g.k_r);
  return g;
}

}  // namespace cmrac
