#include "doctest.h"

#include <cmath>
#include <string>

#include "cmrac/feasibility.hpp"
#include "cmrac/scenario.hpp"

using namespace cmrac;

namespace {

SpectralConstants constants_with(double eta, double norm_b_dagger) {
  SpectralConstants c;
  c.lambda_min_P = 1.0;
  c.lambda_max_P = 1.0;
  c.lambda_min_Q = 1.0;
  c.norm_B = 1.0;
  c.norm_B_dagger = norm_b_dagger;
  c.eta = eta;
  c.sqrt_lambda_min_P = 1.0;
  return c;
}

ConstraintSet constant_constraints(double phi_x, double chi_r, double phi_u) {
  ConstraintSet cs;
  cs.phi_x = Envelope::constant(phi_x);
  cs.chi_r = Envelope::constant(chi_r);
  cs.phi_e = Envelope::constant(phi_x - chi_r);
  cs.phi_u = Envelope::constant(phi_u);
  return cs;
}

}  // namespace

TEST_CASE("budget coefficients arithmetic") {
  auto c = compute_coefficients(constants_with(0.5, 1.0), 2.0, 1.0, 1.0, 0.3);
  CHECK(c.alpha1 == doctest::Approx(1.5).epsilon(1e-14));
  CHECK(c.alpha2 == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(c.beta == doctest::Approx(1.15).epsilon(1e-14));
  CHECK(classify_regime(c) == Regime::Case2_1);

  auto zero = compute_coefficients(constants_with(0.5, 1.0), 0.5, 1.0, 1.0, 0.3);
  CHECK(zero.alpha1 == 0.0);
  CHECK(classify_regime(zero) == Regime::AlphaZero);

  auto neg = compute_coefficients(constants_with(0.7, 1.0), 0.5, 1.0, 1.0, 0.3);
  CHECK(classify_regime(neg) == Regime::Case2_2);

  CHECK_THROWS_AS(compute_coefficients(constants_with(0.5, 1.0), 0.0, 1.0, 1.0, 0.3),
                  ValidationError);
}

TEST_CASE("budget coefficients for the stable-reference example") {
  const Scenario sc = builtin_scenario("example1");
  const PreparedModel pm = prepare(sc);
  auto c = feasibility_coefficients(sc, pm);
  CHECK(c.eta == doctest::Approx(1.0 / (2.0 + std::sqrt(2.0))).epsilon(1e-12));
  CHECK(c.alpha1 == doctest::Approx(5.0 - 1.0 / (2.0 + std::sqrt(2.0))).epsilon(1e-12));
  CHECK(c.alpha2 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(classify_regime(c) == Regime::Case2_1);
}

TEST_CASE("pointwise certificate on constant envelopes") {
  auto c = compute_coefficients(constants_with(0.5, 1.0), 2.0, 1.0, 1.0, 0.3);
  auto grid = uniform_grid(10.0, 0.5);

  auto feasible = check_c1(c, constant_constraints(1.0, 0.3, 5.0), grid, 0.0, 1.0);
  CHECK(feasible.verdict == Verdict::Feasible);
  for (double rhs : feasible.rhs) CHECK(rhs == doctest::Approx(2.65).epsilon(1e-14));
  CHECK(feasible.min_margin == doctest::Approx(2.35).epsilon(1e-14));

  auto infeasible = check_c1(c, constant_constraints(1.0, 0.3, 2.0), grid, 0.0, 1.0);
  CHECK(infeasible.verdict == Verdict::Infeasible);
  CHECK(infeasible.min_margin == doctest::Approx(-0.65).epsilon(1e-13));

  // Constant chi_r makes the decomposition gap exactly alpha1 * chi_r.
  CHECK(feasible.decomposition_differs);
  CHECK(feasible.decomposition_max_gap == doctest::Approx(1.5 * 0.3).epsilon(1e-12));
}

TEST_CASE("disturbance bound shifts every margin by d_bar over the input gain") {
  auto c = compute_coefficients(constants_with(0.4, 1.2), 3.0, 1.0, 0.5, 0.2);
  ConstraintSet cs;
  cs.phi_x = Envelope::ppf(2.0, 0.5, 1.0, 1.0);
  cs.chi_r = Envelope::constant(0.2);
  cs.phi_e = Envelope::ppf(1.8, 0.3, 1.0, 1.0);
  cs.phi_u = Envelope::constant(8.0);
  auto grid = uniform_grid(15.0, 0.25);

  const double d_bar = 0.7, norm_b = 2.0;
  auto clean = check_c1(c, cs, grid, 0.0, norm_b);
  auto disturbed = check_c1(c, cs, grid, d_bar, norm_b);
  REQUIRE(clean.margin.size() == disturbed.margin.size());
  for (std::size_t k = 0; k < clean.margin.size(); ++k) {
    CHECK(disturbed.margin[k] == doctest::Approx(clean.margin[k] - d_bar / norm_b).epsilon(1e-13));
  }
  CHECK(disturbed.disturbance_bound == d_bar);
}

TEST_CASE("raising the input envelope never hurts the verdict") {
  auto c = compute_coefficients(constants_with(0.5, 1.0), 2.0, 1.0, 1.0, 0.3);
  auto grid = uniform_grid(10.0, 0.5);
  for (double lift : {0.0, 0.5, 1.0, 2.0, 4.0}) {
    auto low = check_c1(c, constant_constraints(1.0, 0.3, 2.5), grid, 0.0, 1.0);
    auto high = check_c1(c, constant_constraints(1.0, 0.3, 2.5 + lift), grid, 0.0, 1.0);
    for (std::size_t k = 0; k < low.margin.size(); ++k) CHECK(high.margin[k] >= low.margin[k]);
    if (low.verdict == Verdict::Feasible) CHECK(high.verdict == Verdict::Feasible);
  }
}

TEST_CASE("steady-state reduction") {
  FeasibilityCoefficients c;
  c.alpha1 = 1.0;
  c.beta = 0.5;
  auto pass = steady_state_check(c, 0.05, 1.7);
  CHECK(pass.pass);
  CHECK(pass.margin == doctest::Approx(1.15).epsilon(1e-14));

  auto fail = steady_state_check(c, 0.05, 0.5);
  CHECK_FALSE(fail.pass);
  CHECK(fail.margin == doctest::Approx(-0.05).epsilon(1e-14));
}

TEST_CASE("steady-state verdict agrees with the certificate for flat envelopes") {
  // With no reference-state allowance the certified form and the decomposed
  // budget coincide, so the asymptotic check must match the grid verdict.
  for (double phi_u : {1.2, 2.0, 2.4, 2.6, 3.5}) {
    auto c = compute_coefficients(constants_with(0.5, 1.0), 2.0, 1.0, 1.0, 0.0);
    auto grid = uniform_grid(5.0, 0.5);
    auto rep = check_c1(c, constant_constraints(1.0, 0.0, phi_u), grid, 0.0, 1.0);
    auto ss = steady_state_check(c, 1.0, phi_u);
    CHECK((rep.verdict == Verdict::Feasible) == ss.pass);
    CHECK(rep.min_margin == doctest::Approx(ss.margin).epsilon(1e-13));
    CHECK_FALSE(rep.decomposition_differs);
  }
}

TEST_CASE("input-only budget") {
  auto grid = uniform_grid(20.0, 0.1);

  auto c = compute_coefficients(constants_with(0.5, 1.0), 2.0, 1.0, 1.0, 1.0);
  auto pass = input_only_check(c, Envelope::constant(1.0), Envelope::constant(2.0), grid);
  CHECK(pass.pass);
  CHECK(pass.min_margin == doctest::Approx(0.5).epsilon(1e-13));

  auto fail = input_only_check(c, Envelope::constant(1.0), Envelope::constant(1.4), grid);
  CHECK_FALSE(fail.pass);
  CHECK(fail.min_margin == doctest::Approx(-0.1).epsilon(1e-13));

  // Decaying input envelope against a 0.15 floor: tightest near the tail.
  auto c2 = compute_coefficients(constants_with(0.5, 1.0), 2.0, 1.0, 0.1, 0.1);
  auto decay = input_only_check(c2, Envelope::constant(0.1),
                                Envelope(Envelope::Exponential{4.8, -1.0, 0.2}), grid);
  CHECK(decay.pass);
  CHECK(decay.min_margin > 0.05);
  CHECK(decay.argmin_t == doctest::Approx(20.0).epsilon(1e-12));
}

TEST_CASE("grid refinement moves the minimum margin only slightly") {
  auto c = compute_coefficients(constants_with(0.3, 1.0), 1.5, 1.0, 0.5, 0.2);
  ConstraintSet cs;
  cs.phi_x = Envelope::ppf(1.4, 0.4, 1.2, 1.0);
  cs.chi_r = Envelope::constant(0.2);
  cs.phi_e = Envelope::ppf(1.2, 0.2, 1.2, 1.0);
  cs.phi_u = Envelope::ppf(5.0, 1.7, 1.0, 1.0);
  auto coarse = check_c1(c, cs, uniform_grid(20.0, 0.01), 0.0, 1.0);
  auto fine = check_c1(c, cs, uniform_grid(20.0, 0.005), 0.0, 1.0);
  CHECK(std::abs(coarse.min_margin - fine.min_margin) <= 1e-3);
  CHECK(coarse.verdict == fine.verdict);
}

TEST_CASE("built-in scenarios: neither gain budget certifies") {
  // Both stock scenarios carry conservative gain bounds, so the worst-case
  // budget overshoots the input envelope even though simulation tracks fine.
  {
    const Scenario sc = builtin_scenario("example1");
    const PreparedModel pm = prepare(sc);
    auto rep = check_c1(feasibility_coefficients(sc, pm), sc.constraints,
                        uniform_grid(sc.horizon, 0.01), 0.0, pm.constants.norm_B);
    CHECK(rep.verdict == Verdict::Infeasible);
    // Worst point is t = 0: phi_u = 5 against
    // (0.8 + 0.85)(5 - eta) + 0.9 + 0.85 eta + 1.2, eta = 1/(2 + sqrt 2).
    const double eta = 1.0 / (2.0 + std::sqrt(2.0));
    const double rhs0 = 1.65 * (5.0 - eta) + 0.9 + 0.85 * eta + 1.2;
    CHECK(rep.min_margin == doctest::Approx(5.0 - rhs0).epsilon(1e-12));
    CHECK(rep.argmin_t == 0.0);
  }
  {
    const Scenario sc = builtin_scenario("example2");
    const PreparedModel pm = prepare(sc);
    auto rep = check_c1(feasibility_coefficients(sc, pm), sc.constraints,
                        uniform_grid(sc.horizon, 0.01), 0.0, pm.constants.norm_B);
    CHECK(rep.verdict == Verdict::Infeasible);
    CHECK(rep.min_margin < 0.0);
  }
}

TEST_CASE("model distance diagnostic") {
  Matrix a{{0.0, 1.0}, {2.0, 1.5}};
  Matrix a_r{{0.0, 1.0}, {-1.0, -2.0}};
  auto d = model_distance_check(a, a_r, 1.0 / (2.0 + std::sqrt(2.0)));
  CHECK(d.distance == doctest::Approx(std::sqrt(21.25)).epsilon(1e-12));
  CHECK(d.exceeds_eta);

  auto close = model_distance_check(a, a, 0.5);
  CHECK(close.distance == 0.0);
  CHECK_FALSE(close.exceeds_eta);
}

TEST_CASE("report serialization") {
  auto c = compute_coefficients(constants_with(0.5, 1.0), 2.0, 1.0, 1.0, 0.3);
  auto grid = uniform_grid(1.0, 0.5);
  auto rep = check_c1(c, constant_constraints(1.0, 0.3, 5.0), grid, 0.0, 1.0);

  const std::string csv = feasibility_csv(rep);
  CHECK(csv.rfind("t,phi_u,rhs,margin,dominant_term\n", 0) == 0);
  std::size_t lines = 0;
  for (char ch : csv)
    if (ch == '\n') ++lines;
  CHECK(lines == grid.size() + 1);

  const std::string summary = feasibility_summary(rep);
  CHECK(summary.find("Feasible") != std::string::npos);

  CHECK(to_string(Verdict::Infeasible) == "Infeasible");
  CHECK(to_string(Regime::Case2_1) == "case2.1");
  CHECK(to_string(DominantTerm::Offset) == "offset");
}
