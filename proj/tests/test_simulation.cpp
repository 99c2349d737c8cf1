#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cmrac/simulation.hpp"
#include "doctest.h"

using namespace cmrac;

namespace {

// Minimal matched scalar plant at rest: every signal should stay identically
// zero and the margins should equal the envelope levels.
Scenario rest_scenario() {
  Scenario sc;
  sc.name = "rest";
  sc.A = Matrix{{0.0}};
  sc.B = Matrix{{1.0}};
  sc.A_r = Matrix{{-1.0}};
  sc.B_r = Matrix{{1.0}};
  sc.Q = Matrix{{1.0}};
  sc.reference = {Envelope::constant(0.0)};
  sc.constraints.phi_e = Envelope::constant(1.0);
  sc.constraints.phi_e_given = true;
  sc.constraints.chi_r = Envelope::constant(0.5);
  sc.constraints.phi_x = Envelope::sum({sc.constraints.phi_e, sc.constraints.chi_r});
  sc.constraints.phi_u = Envelope::constant(1.0);
  sc.bounds = {2.0, 1.2, 0.1, 0.0};
  sc.x0 = Matrix{{0.0}};
  sc.xr0 = Matrix{{0.0}};
  sc.k_hat_x0 = Matrix{{0.0}};
  sc.horizon = 1.0;
  sc.dt = 1e-3;
  sc.gamma_x = Matrix{{1.0}};
  return sc;
}

// Scalar plant with unit-eigenvalue P so the measured margin is 1 - e_m^2.
Scenario unit_p_scenario() {
  Scenario sc = rest_scenario();
  sc.name = "unit_p";
  sc.Q = Matrix{{2.0}};
  return sc;
}

// Unstable scalar plant with an input budget far too small to stabilize it;
// the true error must reach the barrier in finite time.
Scenario doomed_scenario() {
  Scenario sc = rest_scenario();
  sc.name = "doomed";
  sc.A = Matrix{{2.0}};
  sc.constraints.phi_u = Envelope::constant(0.01);
  sc.x0 = Matrix{{0.5}};
  sc.horizon = 5.0;
  return sc;
}

Scenario short_noise_scenario() {
  Scenario sc = builtin_scenario("example2_noise");
  sc.horizon = 3.0;
  sc.noise->window_a = 1.0;
  sc.noise->window_b = 3.0;
  return sc;
}

}  // namespace

TEST_CASE("measured margin quadratic form") {
  CHECK(margin_h(Matrix{{0.0}, {0.0}}, Matrix::identity(2), 1.0) == 1.0);
  CHECK(margin_h(Matrix{{1.0}}, Matrix{{1.0}}, 1.0) == 0.0);
  // ||e||^2 = 1 against phi'^2 = 0.81.
  CHECK(margin_h(Matrix{{0.6}, {0.8}}, Matrix::identity(2), 0.9) ==
        doctest::Approx(-0.19).epsilon(1e-14));

  CHECK_THROWS_AS(margin_h(Matrix{{1.0, 2.0}}, Matrix::identity(2), 1.0), ValidationError);
  CHECK_THROWS_AS(margin_h(Matrix{{1.0}, {2.0}}, Matrix::identity(3), 1.0), ValidationError);
}

TEST_CASE("satisfaction probability counts strict positives") {
  CHECK(satisfaction_probability({1.0, 0.5, 2.0}) == 1.0);
  CHECK(satisfaction_probability({1.0, -0.5, 0.0, 2.0}) == 0.5);
  CHECK(satisfaction_probability({-1.0}) == 0.0);
  CHECK_THROWS_AS(satisfaction_probability({}), EmptyWindow);
}

TEST_CASE("plant at rest stays at rest") {
  const Scenario sc = rest_scenario();
  const PreparedModel pm = prepare(sc);
  REQUIRE(pm.oracle_ok);
  CHECK(pm.P(0, 0) == doctest::Approx(0.5).epsilon(1e-12));

  const SimLog log = run(sc, pm);
  CHECK(log.completed());
  REQUIRE(log.samples() == 1001);
  CHECK(log.counters.denom_floor_hits == 0);
  CHECK(log.counters.rate_cap_hits == 0);
  CHECK(log.counters.radial_clamp_hits == 0);
  CHECK(log.max_k_hat_fro == 0.0);

  for (std::size_t k = 0; k < log.samples(); ++k) {
    CHECK(log.x[k] == 0.0);
    CHECK(log.xr[k] == 0.0);
    CHECK(log.u[k] == 0.0);
    CHECK(log.v[k] == 0.0);
    CHECK(log.k_hat[k] == 0.0);
    CHECK(log.e_norm[k] == 0.0);
    CHECK(log.v_e[k] == 0.0);
    CHECK(log.sat[k] == 0);
    // phi'^2 = (1 * sqrt(1/2))^2, h_sat uses the unscaled envelope.
    CHECK(log.h_m[k] == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(log.h_sat[k] == doctest::Approx(1.0).epsilon(1e-14));
  }
}

TEST_CASE("stage evaluation assembles the closed loop") {
  const Scenario sc = builtin_scenario("example1");
  const PreparedModel pm = prepare(sc);
  const double phi_pr_scale = pm.constants.sqrt_lambda_min_P;

  std::mt19937_64 rng(20260819ULL);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> time_pick(0.0, sc.horizon);
  std::uniform_real_distribution<double> rho_pick(0.0, 0.8);

  for (int trial = 0; trial < 200; ++trial) {
    const double t = time_pick(rng);
    const double phi_e = sc.constraints.phi_e.eval(t).value;
    const double phi_pr2 = phi_e * phi_e * pm.constants.lambda_min_P;

    Matrix xr{{unit(rng) * 0.5}, {unit(rng) * 0.5}};
    Matrix e_dir{{unit(rng)}, {unit(rng)}};
    const double quad_raw = dot(e_dir, pm.P * e_dir);
    if (quad_raw <= 0.0) continue;
    const double rho = rho_pick(rng);
    Matrix e = e_dir * std::sqrt(rho * phi_pr2 / quad_raw);
    Matrix x = xr + e;
    Matrix k_hat{{unit(rng) * 2.0, unit(rng) * 2.0}};

    const StageEval ev = eval_stage(sc, pm, t, x, xr, k_hat);

    // Reference model side is exactly A_r xr + B_r r.
    const double r = sc.reference[0].eval(t).value;
    Matrix dxr_expected = sc.A_r * xr + sc.B_r * r;
    CHECK(frobenius_norm(ev.dxr - dxr_expected) <= 1e-12);

    // Plant side is exactly A x + B u (no disturbance in this scenario).
    Matrix dx_expected = sc.A * x + sc.B * ev.u;
    CHECK(frobenius_norm(ev.dx - dx_expected) <= 1e-12);

    // Margin agrees with the standalone quadratic form.
    CHECK(ev.h_m == doctest::Approx(margin_h(e, pm.P, phi_e * phi_pr_scale)).epsilon(1e-12));

    // Saturation: scaling preserves direction and clips the norm exactly.
    const double v_norm = frobenius_norm(ev.v);
    const double u_norm = frobenius_norm(ev.u);
    if (ev.saturated) {
      CHECK(v_norm > ev.phi_u);
      CHECK(u_norm == doctest::Approx(ev.phi_u).epsilon(1e-12));
    } else {
      CHECK(frobenius_norm(ev.u - ev.v) == 0.0);
    }
    CHECK(frobenius_norm(ev.delta_u - (ev.u - ev.v)) == 0.0);

    CHECK(ev.phi_e == doctest::Approx(phi_e).epsilon(1e-12));
    CHECK(ev.denom == doctest::Approx(phi_pr2 - dot(e, pm.P * e)).epsilon(1e-10));
  }
}

TEST_CASE("noisy measurement floors the denominator instead of throwing") {
  const Scenario sc = unit_p_scenario();
  const PreparedModel pm = prepare(sc);
  REQUIRE(pm.P(0, 0) == doctest::Approx(1.0).epsilon(1e-12));

  // Measured error lands exactly on the barrier: phi'^2 - e_m^2 = 1 - 1 = 0.
  const Matrix x{{0.6}};
  const Matrix xr{{0.0}};
  const Matrix k0{{0.0}};
  const std::vector<double> bump{0.4};
  const StageEval noisy = eval_stage(sc, pm, 0.0, x, xr, k0, &bump);
  CHECK(noisy.denom == sc.denom_floor);
  CHECK(noisy.h_m == doctest::Approx(0.0).epsilon(1e-14));

  // Negative measured margin keeps its sign: 1 - (1 + d)^2 ~ -2d stays inside
  // the floor band for d = 0.2 * floor.
  const std::vector<double> big_bump{0.4 + 0.2 * sc.denom_floor};
  const StageEval below = eval_stage(sc, pm, 0.0, x, xr, k0, &big_bump);
  CHECK(below.denom == -sc.denom_floor);

  // The same contact without a noise channel is a hard stop.
  const Matrix x_on{{1.0}};
  CHECK_THROWS_AS((void)eval_stage(sc, pm, 0.0, x_on, xr, k0), BarrierBreach);

  // Dimension guards.
  CHECK_THROWS_AS((void)eval_stage(sc, pm, 0.0, Matrix{{0.0}, {0.0}}, xr, k0),
                  DimensionMismatch);
  const std::vector<double> wrong{0.1, 0.2};
  CHECK_THROWS_AS((void)eval_stage(sc, pm, 0.0, x, xr, k0, &wrong), DimensionMismatch);
}

TEST_CASE("clean run respects every envelope") {
  const Scenario sc = builtin_scenario("example1");
  const PreparedModel pm = prepare(sc);
  const SimLog log = run(sc, pm);

  CHECK(log.completed());
  CHECK(log.samples() == sc.steps() + 1);
  CHECK(log.counters.denom_floor_hits == 0);
  CHECK(log.counters.rate_cap_hits == 0);
  CHECK(log.max_k_hat_fro <= sc.bounds.k_bar_x + 1e-9);

  for (std::size_t k = 0; k < log.samples(); ++k) {
    CHECK(log.e_norm[k] < log.phi_e[k]);
    CHECK(log.u_norm[k] <= log.phi_u[k] * (1.0 + 1e-12));
    CHECK(log.h_m[k] > 0.0);
  }
}

TEST_CASE("runs are deterministic for a fixed seed") {
  const Scenario sc = short_noise_scenario();
  const PreparedModel pm = prepare(sc);
  RunOptions opt;
  opt.seed = 42;

  const SimLog a = run(sc, pm, opt);
  const SimLog b = run(sc, pm, opt);
  REQUIRE(a.samples() == b.samples());
  CHECK(a.x == b.x);
  CHECK(a.u == b.u);
  CHECK(a.k_hat == b.k_hat);
  CHECK(a.h_m == b.h_m);
  CHECK(a.counters.denom_floor_hits == b.counters.denom_floor_hits);

  RunOptions other;
  other.seed = 43;
  const SimLog c = run(sc, pm, other);
  CHECK(a.x != c.x);
}

TEST_CASE("noise hold length changes the sample path") {
  Scenario sc = short_noise_scenario();
  const PreparedModel pm = prepare(sc);
  RunOptions opt;
  opt.seed = 42;
  const SimLog hold1 = run(sc, pm, opt);

  sc.noise->hold_steps = 2;
  const PreparedModel pm2 = prepare(sc);
  const SimLog hold2 = run(sc, pm2, opt);
  CHECK(hold1.x != hold2.x);
}

TEST_CASE("light logs keep only statistics") {
  const Scenario sc = short_noise_scenario();
  const PreparedModel pm = prepare(sc);
  RunOptions opt;
  opt.light = true;
  opt.seed = 7;
  const SimLog log = run(sc, pm, opt);

  CHECK(log.samples() > 0);
  CHECK(log.x.empty());
  CHECK(log.u.empty());
  CHECK(log.k_hat.empty());
  CHECK(log.h_m.size() == log.samples());
  CHECK(log.max_k_hat_fro > 0.0);
  CHECK_THROWS_AS((void)log_csv(log), ValidationError);
}

TEST_CASE("hopeless input budget ends at the barrier") {
  const Scenario sc = doomed_scenario();
  const PreparedModel pm = prepare(sc);
  const SimLog log = run(sc, pm);

  REQUIRE(log.breach_t.has_value());
  CHECK_FALSE(log.completed());
  CHECK(*log.breach_t > 0.0);
  CHECK(*log.breach_t < sc.horizon);
  CHECK(log.samples() < sc.steps() + 1);
}

TEST_CASE("total Lyapunov recording needs a matched plant") {
  const Scenario sc = builtin_scenario("example2");
  const PreparedModel pm = prepare(sc);
  RunOptions opt;
  opt.oracle = true;
  CHECK_THROWS_AS((void)run(sc, pm, opt), ValidationError);
}

TEST_CASE("csv export schema") {
  Scenario sc = builtin_scenario("example1");
  sc.horizon = 0.5;
  const PreparedModel pm = prepare(sc);

  const SimLog plain = run(sc, pm);
  std::istringstream is(log_csv(plain));
  std::string header;
  std::getline(is, header);
  CHECK(header == "t,x_1,x_2,xr_1,xr_2,e_norm,phi_e,u_1,u_norm,phi_u,sat,V_e,h_m,k_hat_fro");
  std::size_t rows = 0;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty()) ++rows;
  }
  CHECK(rows == plain.samples());

  RunOptions opt;
  opt.oracle = true;
  const SimLog oracle = run(sc, pm, opt);
  std::istringstream is2(log_csv(oracle));
  std::getline(is2, header);
  CHECK(header ==
        "t,x_1,x_2,xr_1,xr_2,e_norm,phi_e,u_1,u_norm,phi_u,sat,V_e,h_m,k_hat_fro,V_total");
}

TEST_CASE("trial seeds are distinct and stable") {
  CHECK(trial_seed(777, 0) == trial_seed(777, 0));
  std::vector<std::uint64_t> seen;
  for (std::uint64_t i = 0; i < 512; ++i) seen.push_back(trial_seed(777, i));
  std::sort(seen.begin(), seen.end());
  CHECK(std::adjacent_find(seen.begin(), seen.end()) == seen.end());
  CHECK(trial_seed(777, 3) != trial_seed(778, 3));
}

TEST_CASE("noise-free ensemble always satisfies the constraint") {
  const Scenario sc = builtin_scenario("example2_noise");
  const PreparedModel pm = prepare(sc);
  const MonteCarloReport rep = monte_carlo(sc, pm, 3, 0.0, 99);

  CHECK(rep.window_a == 10.0);
  CHECK(rep.window_b == 15.0);
  CHECK(rep.window_samples == 5001);
  CHECK(rep.trials.size() == 3);
  CHECK(rep.p_avg == 1.0);
  CHECK(rep.breached_trials == 0);
  for (const auto& tr : rep.trials) CHECK(tr.satisfaction == 1.0);
}

TEST_CASE("ensembles are reproducible and bounded") {
  const Scenario sc = short_noise_scenario();
  const PreparedModel pm = prepare(sc);

  const auto a = monte_carlo(sc, pm, 2, 0.05, 12345);
  const auto b = monte_carlo(sc, pm, 2, 0.05, 12345);
  CHECK(a.p_avg == b.p_avg);
  CHECK(a.max_k_hat_fro == b.max_k_hat_fro);
  REQUIRE(a.trials.size() == b.trials.size());
  for (std::size_t i = 0; i < a.trials.size(); ++i) {
    CHECK(a.trials[i].satisfaction == b.trials[i].satisfaction);
  }
  CHECK(a.max_k_hat_fro <= sc.bounds.k_bar_x + 1e-9);
  CHECK(a.p_avg >= 0.0);
  CHECK(a.p_avg <= 1.0);

  std::istringstream is(monte_carlo_csv(a));
  std::string header;
  std::getline(is, header);
  CHECK(header == "sigma2,trial,satisfaction");

  CHECK_THROWS_AS((void)monte_carlo(sc, pm, 0, 0.05, 1), ValidationError);
  CHECK_THROWS_AS((void)monte_carlo(sc, pm, 1, -0.1, 1), ValidationError);
  CHECK_THROWS_AS((void)monte_carlo(sc, pm, 1, 0.05, 1, std::make_pair(2.0, 1.0)),
                  ValidationError);
}
