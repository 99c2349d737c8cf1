#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cmrac/csv.hpp"
#include "cmrac/errors.hpp"
#include "cmrac/scenario.hpp"
#include "cmrac/simulation.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 1;   // parse or validation failure
constexpr int kExitBreach = 2;    // barrier breach (or non-finite state) while simulating
constexpr int kExitStrict = 3;    // --strict and the certificate is infeasible

std::string output_dir(const std::string& flag) {
  std::string dir = flag;
  if (dir.empty()) {
    const char* env = std::getenv("CMRAC_OUT_DIR");
    dir = env ? env : ".";
  }
  if (!dir.empty() && dir.back() != '/') dir += '/';
  return dir;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw cmrac::Error("cannot open output file: " + path);
  out << content;
  if (!out) throw cmrac::Error("write failed: " + path);
}

void print_validation(const cmrac::Scenario& sc, const cmrac::PreparedModel& pm,
                      const cmrac::ValidationReport& rep) {
  std::cout << "scenario " << sc.name << ": n=" << sc.n() << " m=" << sc.m()
            << " T=" << sc.horizon << " dt=" << sc.dt << "\n";
  std::cout << "  reference model Hurwitz: " << (rep.a_r_hurwitz ? "yes" : "no") << "\n";
  std::cout << "  matching residuals: A " << cmrac::format_real(rep.residual_a) << ", B "
            << cmrac::format_real(rep.residual_b)
            << (rep.oracle_available ? " (exact match)" : " (approximate match)") << "\n";
  std::cout << "  assumption on reference trajectory: " << (rep.assumption1_pass ? "pass" : "FAIL")
            << " (sup ||x_r|| = " << cmrac::format_real(rep.sup_norm_xr) << ")\n";
  std::cout << "  ideal gain norm " << cmrac::format_real(rep.ideal_gain_norm) << " vs k_bar_x "
            << cmrac::format_real(sc.bounds.k_bar_x)
            << (rep.k_bar_covers_ideal ? " (covered)" : " (NOT covered)") << "\n";
  std::cout << "  certificate: " << cmrac::to_string(rep.c1_verdict) << " (min margin "
            << cmrac::format_real(rep.c1_min_margin) << ")";
  if (rep.c1_verdict == cmrac::Verdict::Infeasible) {
    std::cout << "  [warning: condition not certified; simulation proceeds]";
  }
  std::cout << "\n";
  std::cout << "  eta " << cmrac::format_real(pm.constants.eta) << ", lambda_min(P) "
            << cmrac::format_real(pm.constants.lambda_min_P) << "\n";
}

int cmd_feasibility(const std::string& scenario, double grid_step, bool disturbed, bool strict,
                    const std::string& out_flag) {
  cmrac::Scenario sc = cmrac::resolve_scenario(scenario);
  cmrac::PreparedModel pm = cmrac::prepare(sc);
  const auto coeffs = cmrac::feasibility_coefficients(sc, pm);
  const auto grid = cmrac::uniform_grid(sc.horizon, grid_step);
  const double d_bar = disturbed ? sc.bounds.d_bar : 0.0;
  const auto rep = cmrac::check_c1(coeffs, sc.constraints, grid, d_bar, pm.constants.norm_B);

  std::cout << cmrac::feasibility_summary(rep);

  // Horizon-end values stand in for the asymptotes in the steady-state check.
  const auto ss = cmrac::steady_state_check(coeffs,
                                            sc.constraints.phi_e.eval(sc.horizon).value,
                                            sc.constraints.phi_u.eval(sc.horizon).value);
  std::cout << "steady state: " << (ss.pass ? "pass" : "fail") << " (margin "
            << cmrac::format_real(ss.margin) << ")\n";

  const std::string path = output_dir(out_flag) + "feasibility_" + sc.name + ".csv";
  write_file(path, cmrac::feasibility_csv(rep));
  std::cout << "wrote " << path << "\n";

  if (strict && rep.verdict == cmrac::Verdict::Infeasible) return kExitStrict;
  return kExitOk;
}

int cmd_simulate(const std::string& scenario, const std::string& out_flag, bool oracle) {
  cmrac::Scenario sc = cmrac::resolve_scenario(scenario);
  cmrac::PreparedModel pm = cmrac::prepare(sc);
  const auto vrep = cmrac::validation_report(sc, pm, 0.01);
  print_validation(sc, pm, vrep);

  cmrac::RunOptions opt;
  opt.oracle = oracle;
  cmrac::SimLog log = cmrac::run(sc, pm, opt);

  const std::string path = output_dir(out_flag) + sc.name + "_sim.csv";
  write_file(path, cmrac::log_csv(log));
  std::cout << "wrote " << path << " (" << log.samples() << " samples)\n";
  std::cout << "  max ||K_hat||_F = " << cmrac::format_real(log.max_k_hat_fro) << "\n";
  std::cout << "  safeguards: denominator floors " << log.counters.denom_floor_hits
            << ", rate caps " << log.counters.rate_cap_hits << ", radial clamps "
            << log.counters.radial_clamp_hits << "\n";
  if (log.breach_t) {
    std::cout << "barrier breach at t = " << cmrac::format_real(*log.breach_t)
              << "; log truncated at the last sample before the event\n";
    return kExitBreach;
  }
  if (log.nonfinite_t) {
    std::cout << "state became non-finite at t = " << cmrac::format_real(*log.nonfinite_t)
              << "; log truncated\n";
    return kExitBreach;
  }
  return kExitOk;
}

int cmd_montecarlo(const std::string& scenario, std::optional<double> sigma2,
                   std::size_t trials, std::optional<std::uint64_t> seed,
                   const std::vector<double>& window, const std::string& out_flag) {
  cmrac::Scenario sc = cmrac::resolve_scenario(scenario);
  cmrac::PreparedModel pm = cmrac::prepare(sc);

  double sigma = 0.0;
  if (sigma2) {
    sigma = *sigma2;
  } else if (sc.noise) {
    sigma = sc.noise->sigma2;
  } else {
    throw cmrac::ValidationError("scenario has no noise spec; pass --sigma2");
  }
  std::uint64_t master = seed ? *seed : (sc.noise ? sc.noise->seed : 0);
  std::optional<std::pair<double, double>> win;
  if (!window.empty()) {
    if (window.size() != 2) throw cmrac::ValidationError("--window needs two values: a b");
    win = std::make_pair(window[0], window[1]);
  }

  const auto rep = cmrac::monte_carlo(sc, pm, trials, sigma, master, win);
  std::cout << "sigma2=" << cmrac::format_real(rep.sigma2) << " trials=" << rep.trials.size()
            << " window=[" << rep.window_a << "," << rep.window_b << "]"
            << " p_avg=" << cmrac::format_real(rep.p_avg) << " breached=" << rep.breached_trials
            << " max||K_hat||_F=" << cmrac::format_real(rep.max_k_hat_fro) << "\n";

  const std::string path = output_dir(out_flag) + sc.name + "_mc.csv";
  write_file(path, cmrac::monte_carlo_csv(rep));
  std::cout << "wrote " << path << "\n";
  return kExitOk;
}

int cmd_scenario_list() {
  for (const auto& name : cmrac::builtin_scenario_names()) {
    const auto sc = cmrac::builtin_scenario(name);
    std::cout << name << "  (n=" << sc.n() << ", m=" << sc.m() << ", T=" << sc.horizon
              << (sc.disturbance.empty() ? "" : ", disturbed")
              << (sc.noise ? ", noisy" : "") << ")\n";
  }
  return kExitOk;
}

int cmd_scenario_show(const std::string& name) {
  const auto sc = cmrac::resolve_scenario(name);
  std::cout << cmrac::serialize_scenario(sc);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Constrained adaptive tracking: feasibility certificates and simulation"};
  app.require_subcommand(1);

  std::string scenario;
  std::string out_flag;
  double grid_step = 0.01;
  bool disturbed = false;
  bool strict = false;
  bool oracle = false;
  std::optional<double> sigma2;
  std::size_t trials = 100;
  std::optional<std::uint64_t> seed;
  std::vector<double> window;
  std::string show_name;

  auto* feas = app.add_subcommand("feasibility", "Check the offline input-budget certificate");
  feas->add_option("--scenario", scenario, "Built-in name or scenario file")->required();
  feas->add_option("--grid-step", grid_step, "Certificate grid step")->check(CLI::PositiveNumber);
  feas->add_flag("--disturbed", disturbed, "Include the disturbance budget d_bar/||B||");
  feas->add_flag("--strict", strict, "Exit 3 when the certificate is infeasible");
  feas->add_option("--out", out_flag, "Output directory (default $CMRAC_OUT_DIR or .)");

  auto* sim = app.add_subcommand("simulate", "Run the closed loop and write the log CSV");
  sim->add_option("--scenario", scenario, "Built-in name or scenario file")->required();
  sim->add_option("--out", out_flag, "Output directory (default $CMRAC_OUT_DIR or .)");
  sim->add_flag("--oracle", oracle, "Record the total Lyapunov function (matched plants only)");

  auto* mc = app.add_subcommand("montecarlo", "Noisy trial sweep with per-trial seeds");
  mc->add_option("--scenario", scenario, "Built-in name or scenario file")->required();
  mc->add_option("--sigma2", sigma2, "Noise level (default: scenario noise spec)");
  mc->add_option("--trials", trials, "Number of trials")->check(CLI::PositiveNumber);
  mc->add_option("--seed", seed, "Master seed (default: scenario noise spec)");
  mc->add_option("--window", window, "Satisfaction window: a b")->expected(2);
  mc->add_option("--out", out_flag, "Output directory (default $CMRAC_OUT_DIR or .)");

  auto* scn = app.add_subcommand("scenario", "List or show scenarios");
  auto* scn_list = scn->add_subcommand("list", "List built-in scenarios");
  auto* scn_show = scn->add_subcommand("show", "Print a scenario in canonical form");
  scn_show->add_option("name", show_name, "Built-in name or scenario file")->required();
  scn->require_subcommand(1);

  CLI11_PARSE(app, argc, argv);

  try {
    if (feas->parsed()) return cmd_feasibility(scenario, grid_step, disturbed, strict, out_flag);
    if (sim->parsed()) return cmd_simulate(scenario, out_flag, oracle);
    if (mc->parsed()) return cmd_montecarlo(scenario, sigma2, trials, seed, window, out_flag);
    if (scn->parsed()) {
      if (scn_list->parsed()) return cmd_scenario_list();
      if (scn_show->parsed()) return cmd_scenario_show(show_name);
    }
  } catch (const cmrac::ParseError& ex) {
    std::cerr << "parse error: " << ex.what() << "\n";
    return kExitInvalid;
  } catch (const cmrac::ValidationError& ex) {
    std::cerr << "validation error: " << ex.what() << "\n";
    return kExitInvalid;
  } catch (const cmrac::Error& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return kExitInvalid;
  }
  return kExitInvalid;
}
