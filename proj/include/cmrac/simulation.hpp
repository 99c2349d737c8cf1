#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cmrac/scenario.hpp"

namespace cmrac {

struct RunOptions {
  bool oracle = false;  // also record the total Lyapunov function (matched plants only)
  bool light = false;   // keep only margins, counters and maxima (Monte Carlo)
  std::optional<double> sigma2;          // override the scenario noise level
  std::optional<std::uint64_t> seed;     // override the scenario noise seed
};

// Noise-robustness safeguards fire only when measurement noise pushes the
// measured error against the barrier; all three stay at zero in clean runs.
struct SafeguardCounters {
  std::size_t denom_floor_hits = 0;   // measured barrier denominator floored in magnitude
  std::size_t rate_cap_hits = 0;      // adaptation-rate norm capped
  std::size_t radial_clamp_hits = 0;  // post-step gain pulled back to the ball
};

struct SimLog {
  std::size_t n = 0, m = 0;
  std::vector<double> t;
  // Row-major per-sample blocks: x and xr hold n values per sample, u and v
  // hold m, k_hat holds m*n. Empty in light mode.
  std::vector<double> x, xr, u, v, k_hat;
  std::vector<double> e_norm, phi_e, phi_x, phi_u, u_norm, v_e, k_hat_fro;
  std::vector<unsigned char> sat;
  std::vector<double> h_m;       // measured barrier margin phi'^2 - e_m^T P e_m
  std::vector<double> h_sat;     // measured satisfaction margin phi_e^2 - e_m^T P e_m
  std::vector<double> v_total;   // oracle mode only
  std::optional<double> breach_t;
  std::optional<double> nonfinite_t;
  SafeguardCounters counters;
  double max_k_hat_fro = 0.0;

  std::size_t samples() const { return t.size(); }
  bool completed() const { return !breach_t && !nonfinite_t; }
};

SimLog run(const Scenario& sc, const PreparedModel& pm, const RunOptions& opt = {});

// CSV with columns t, x_*, xr_*, e_norm, phi_e, u_*, u_norm, phi_u, sat, V_e,
// h_m, k_hat_fro, plus V_total when the log carries it. Requires a full log.
std::string log_csv(const SimLog& log);

// One closed-loop stage evaluation (the map RK4 integrates), exposed so the
// assembled error dynamics can be verified term by term. Shares its
// implementation with the integrator. `noise` null means exact measurement:
// a barrier contact throws; non-null floors the denominator in magnitude
// instead (the control input itself stays defined for any measured error).
struct StageEval {
  Matrix dx, dxr, dk;
  Matrix u, v, delta_u;
  bool saturated = false;
  double h_m = 0.0;        // measured margin phi'^2 - e_m^T P e_m
  double denom = 0.0;      // adaptive-law denominator actually used
  double v_e = 0.0;        // barrier value at the measured error
  double phi_e = 0.0, phi_e_dot = 0.0, phi_u = 0.0;
};

StageEval eval_stage(const Scenario& sc, const PreparedModel& pm, double t, const Matrix& x,
                     const Matrix& xr, const Matrix& k_hat,
                     const std::vector<double>* noise = nullptr);

// Constraint-satisfaction margin at a measured error: phi'^2 - e_m^T P e_m.
// A negative value is the violation signal, so nothing is thrown.
double margin_h(const Matrix& e_m, const Matrix& p, double phi_e_prime);

// Fraction of margins that are strictly positive; EmptyWindow when empty.
double satisfaction_probability(const std::vector<double>& margins);

struct TrialStat {
  double satisfaction = 0.0;
  bool breached = false;
  double breach_t = 0.0;
  double max_k_hat_fro = 0.0;
};

struct MonteCarloReport {
  double sigma2 = 0.0;
  std::uint64_t master_seed = 0;
  double window_a = 0.0, window_b = 0.0;
  std::size_t window_samples = 0;
  std::vector<TrialStat> trials;
  double p_avg = 0.0;            // mean per-trial satisfaction
  double max_k_hat_fro = 0.0;
  std::size_t breached_trials = 0;
};

// Repeated noisy runs with per-trial derived seeds. Satisfaction is the
// fraction of window samples whose measured margin h_m stays positive; a
// trial that stops early (true-error barrier contact or numerical blow-up)
// counts its remaining window samples as violations.
MonteCarloReport monte_carlo(const Scenario& sc, const PreparedModel& pm,
                             std::size_t n_trials, double sigma2, std::uint64_t master_seed,
                             std::optional<std::pair<double, double>> window = std::nullopt);

std::string monte_carlo_csv(const MonteCarloReport& rep);

// Deterministic per-trial seed derivation (stable across platforms).
std::uint64_t trial_seed(std::uint64_t master_seed, std::uint64_t trial_index);

}  // namespace cmrac
