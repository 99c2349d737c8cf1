#include "cmrac/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "cmrac/controller.hpp"
#include "cmrac/csv.hpp"
#include "cmrac/errors.hpp"

namespace cmrac {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// Standard-normal stream: Box-Muller over mt19937_64, caching the second
// variate so the draw order is independent of how many values each step takes.
class GaussianStream {
 public:
  explicit GaussianStream(std::uint64_t seed) : gen_(seed) {}

  double next() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - std::ldexp(static_cast<double>(gen_() >> 11), -53);  // (0, 1]
    const double u2 = std::ldexp(static_cast<double>(gen_() >> 11), -53);        // [0, 1)
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = kTwoPi * u2;
    spare_ = radius * std::sin(angle);
    have_spare_ = true;
    return radius * std::cos(angle);
  }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Closed-loop model flattened to row-major buffers for the stage map.
struct FlatModel {
  std::size_t n = 0, m = 0;
  std::vector<double> a, b, ar, br, p, bdag, kr, gamma;
  double denom_floor = 1e-9;
  double k_bar = 1.0;
  double k_bar_eff2 = 1.0;  // squared projection onset radius
  double eps_p = 0.1;
  double lambda_min_p = 1.0;

  static std::vector<double> flat(const Matrix& mat) {
    std::vector<double> out(mat.rows() * mat.cols());
    for (std::size_t i = 0; i < mat.rows(); ++i) {
      for (std::size_t j = 0; j < mat.cols(); ++j) out[i * mat.cols() + j] = mat(i, j);
    }
    return out;
  }

  FlatModel(const Scenario& sc, const PreparedModel& pm) {
    n = sc.n();
    m = sc.m();
    a = flat(sc.A);
    b = flat(sc.B);
    ar = flat(sc.A_r);
    br = flat(sc.B_r);
    p = flat(pm.P);
    bdag = flat(pm.b_dagger);
    kr = flat(pm.gains.k_r);
    gamma = flat(sc.gamma_x);
    denom_floor = sc.denom_floor;
    k_bar = sc.bounds.k_bar_x;
    const double keff = k_bar / std::sqrt(1.0 + sc.proj_epsilon);
    k_bar_eff2 = keff * keff;
    eps_p = sc.proj_epsilon;
    lambda_min_p = pm.constants.lambda_min_P;
  }
};

// Exogenous data for one stage evaluation.
struct StageSignals {
  double t = 0.0;
  double phi_e = 1.0;
  double phi_e_dot = 0.0;
  double phi_pr2 = 1.0;  // (phi_e * sqrt(lambda_min(P)))^2
  double phi_u = 1.0;
  const double* r = nullptr;  // m values
  const double* d = nullptr;  // n values or null
};

// Optional per-stage byproducts for logging and verification.
struct StageOut {
  double* u = nullptr;       // m
  double* v = nullptr;       // m
  bool saturated = false;
  double h_m = 0.0;          // measured barrier margin
  double h_sat = 0.0;        // measured satisfaction margin (unscaled envelope)
  double denom = 0.0;
  double v_e = 0.0;          // barrier value at the measured error
};

struct Workspace {
  std::vector<double> e_m, x_m, pe, bde, bpe, gb, v, u;
  explicit Workspace(const FlatModel& fm)
      : e_m(fm.n), x_m(fm.n), pe(fm.n), bde(fm.m), bpe(fm.m), gb(fm.m), v(fm.m), u(fm.m) {}
};

// y layout: [x (n), xr (n), K_hat row-major (m*n)]; dy matches.
// Throws BarrierBreach when the measured error touches the floored barrier
// and no noise channel is active (exact measurement).
void stage_map(const FlatModel& fm, const StageSignals& sig, const double* y,
               const double* noise, double* dy, Workspace& ws, SafeguardCounters& counters,
               StageOut* out) {
  const std::size_t n = fm.n;
  const std::size_t m = fm.m;
  const double* x = y;
  const double* xr = y + n;
  const double* kh = y + 2 * n;
  double* dx = dy;
  double* dxr = dy + n;
  double* dk = dy + 2 * n;

  for (std::size_t i = 0; i < n; ++i) {
    ws.x_m[i] = x[i] + (noise ? noise[i] : 0.0);
    ws.e_m[i] = ws.x_m[i] - xr[i];
  }

  double quad = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += fm.p[i * n + j] * ws.e_m[j];
    ws.pe[i] = acc;
    quad += ws.e_m[i] * acc;
  }
  const double margin = sig.phi_pr2 - quad;
  double denom = margin;
  if (!noise) {
    if (denom <= fm.denom_floor) {
      throw BarrierBreach("tracking error reached the barrier", sig.t);
    }
  } else if (std::abs(denom) < fm.denom_floor) {
    // A noisy measured margin may sit anywhere around zero; the adaptive law
    // divides by it, so the magnitude is floored away from the singularity
    // while preserving the sign the law would have seen.
    denom = denom < 0.0 ? -fm.denom_floor : fm.denom_floor;
    ++counters.denom_floor_hits;
  }

  for (std::size_t i = 0; i < m; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += fm.bdag[i * n + j] * ws.e_m[j];
    ws.bde[i] = acc;
  }
  const double ratio = sig.phi_e_dot / sig.phi_e;
  for (std::size_t i = 0; i < m; ++i) {
    double acc = -ratio * ws.bde[i];
    for (std::size_t j = 0; j < m; ++j) acc += fm.kr[i * m + j] * sig.r[j];
    for (std::size_t j = 0; j < n; ++j) acc += kh[i * n + j] * ws.x_m[j];
    ws.v[i] = acc;
  }
  double vn2 = 0.0;
  for (std::size_t i = 0; i < m; ++i) vn2 += ws.v[i] * ws.v[i];
  const double vn = std::sqrt(vn2);
  bool saturated = vn > sig.phi_u;
  const double scale = saturated ? sig.phi_u / vn : 1.0;
  for (std::size_t i = 0; i < m; ++i) ws.u[i] = scale * ws.v[i];

  for (std::size_t i = 0; i < n; ++i) {
    double acc = sig.d ? sig.d[i] : 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += fm.a[i * n + j] * x[j];
    for (std::size_t j = 0; j < m; ++j) acc += fm.b[i * m + j] * ws.u[j];
    dx[i] = acc;
    double accr = 0.0;
    for (std::size_t j = 0; j < n; ++j) accr += fm.ar[i * n + j] * xr[j];
    for (std::size_t j = 0; j < m; ++j) accr += fm.br[i * m + j] * sig.r[j];
    dxr[i] = accr;
  }

  for (std::size_t j = 0; j < m; ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += fm.b[i * m + j] * ws.pe[i];
    ws.bpe[j] = acc;
  }
  for (std::size_t i = 0; i < m; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < m; ++j) acc += fm.gamma[i * m + j] * ws.bpe[j];
    ws.gb[i] = acc;
  }
  const double inv_denom = 1.0 / denom;
  for (std::size_t i = 0; i < m; ++i) {
    const double coeff = -ws.gb[i] * inv_denom;
    for (std::size_t j = 0; j < n; ++j) dk[i * n + j] = coeff * ws.x_m[j];
  }

  // Frobenius-ball projection: remove the outward radial rate scaled by the
  // boundary-layer coordinate f once the gain passes the onset radius.
  double k_normsq = 0.0;
  double inner = 0.0;
  const std::size_t mn = m * n;
  for (std::size_t i = 0; i < mn; ++i) {
    k_normsq += kh[i] * kh[i];
    inner += kh[i] * dk[i];
  }
  const double f = (k_normsq - fm.k_bar_eff2) / (fm.eps_p * fm.k_bar_eff2);
  if (f > 0.0 && inner > 0.0 && k_normsq > 0.0) {
    const double coef = f * inner / k_normsq;
    for (std::size_t i = 0; i < mn; ++i) dk[i] -= coef * kh[i];
  }
  double rate2 = 0.0;
  for (std::size_t i = 0; i < mn; ++i) rate2 += dk[i] * dk[i];
  if (rate2 > kRateNormCap * kRateNormCap) {
    const double s = kRateNormCap / std::sqrt(rate2);
    for (std::size_t i = 0; i < mn; ++i) dk[i] *= s;
    ++counters.rate_cap_hits;
  }

  if (out) {
    for (std::size_t i = 0; i < m; ++i) {
      if (out->u) out->u[i] = ws.u[i];
      if (out->v) out->v[i] = ws.v[i];
    }
    out->saturated = saturated;
    out->h_m = margin;
    out->h_sat = sig.phi_e * sig.phi_e - quad;
    out->denom = denom;
    out->v_e = margin > 0.0 ? std::log(sig.phi_pr2 / margin)
                            : std::numeric_limits<double>::infinity();
  }
}

// Precomputed exogenous signals at every RK4 stage time (k * dt / 2). These
// depend only on the scenario and dt, so Monte Carlo trials share one table.
struct SignalTable {
  std::size_t steps = 0;
  double dt = 0.0;
  std::vector<double> phi_e, phi_e_dot, phi_pr2, phi_u;
  std::vector<double> r;  // m per stage time
  std::vector<double> d;  // n per stage time; empty when no disturbance
  std::size_t m = 0, n = 0;

  SignalTable(const Scenario& sc, const PreparedModel& pm) {
    steps = sc.steps();
    dt = sc.dt;
    m = sc.m();
    n = sc.n();
    const std::size_t count = 2 * steps + 1;
    phi_e.resize(count);
    phi_e_dot.resize(count);
    phi_pr2.resize(count);
    phi_u.resize(count);
    r.resize(count * m);
    const bool disturbed = !sc.disturbance.empty();
    if (disturbed) d.resize(count * n);
    const double lmin = pm.constants.lambda_min_P;
    for (std::size_t h = 0; h < count; ++h) {
      const double t = 0.5 * dt * static_cast<double>(h);
      const auto pe = sc.constraints.phi_e.eval_for_control(t, sc.constraints.clamp_floor);
      phi_e[h] = pe.value;
      phi_e_dot[h] = pe.derivative;
      phi_pr2[h] = pe.value * pe.value * lmin;
      phi_u[h] = sc.constraints.phi_u.eval(t).value;
      if (!(phi_u[h] > 0.0)) throw NonPositiveEnvelope("phi_u", t);
      if (!(phi_e[h] > 0.0)) throw NonPositiveEnvelope("phi_e", t);
      for (std::size_t i = 0; i < m; ++i) r[h * m + i] = sc.reference[i].eval(t).value;
      if (disturbed) {
        for (std::size_t i = 0; i < n; ++i) d[h * n + i] = sc.disturbance[i].eval(t).value;
      }
    }
  }

  StageSignals at(std::size_t h) const {
    StageSignals sig;
    sig.t = 0.5 * dt * static_cast<double>(h);
    sig.phi_e = phi_e[h];
    sig.phi_e_dot = phi_e_dot[h];
    sig.phi_pr2 = phi_pr2[h];
    sig.phi_u = phi_u[h];
    sig.r = &r[h * m];
    sig.d = d.empty() ? nullptr : &d[h * n];
    return sig;
  }
};

class Engine {
 public:
  Engine(const Scenario& sc, const PreparedModel& pm)
      : sc_(sc), pm_(pm), fm_(sc, pm), table_(sc, pm), ws_(fm_) {}

  SimLog run(const RunOptions& opt) {
    const std::size_t n = fm_.n;
    const std::size_t m = fm_.m;
    const std::size_t mn = m * n;
    const std::size_t dim = 2 * n + mn;
    const std::size_t steps = table_.steps;

    if (opt.oracle && !pm_.oracle_ok) {
      throw ValidationError(
          "total Lyapunov recording needs an exactly matched plant (residuals above tolerance)");
    }

    double sigma2 = 0.0;
    std::uint64_t seed = 0;
    int hold = 1;
    if (sc_.noise) {
      sigma2 = sc_.noise->sigma2;
      seed = sc_.noise->seed;
      hold = sc_.noise->hold_steps;
    }
    if (opt.sigma2) sigma2 = *opt.sigma2;
    if (opt.seed) seed = *opt.seed;
    // Covariance sigma^2 * I_n, so each component has standard deviation sigma.
    const double noise_scale = sigma2 > 0.0 ? std::sqrt(sigma2) : 0.0;
    const bool noisy = noise_scale > 0.0;

    std::vector<double> y(dim), k1(dim), k2(dim), k3(dim), k4(dim), ytmp(dim);
    for (std::size_t i = 0; i < n; ++i) y[i] = sc_.x0(i, 0);
    for (std::size_t i = 0; i < n; ++i) y[n + i] = sc_.xr0(i, 0);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) y[2 * n + i * n + j] = sc_.k_hat_x0(i, j);
    }

    GaussianStream gs(seed);
    std::vector<double> noise(noisy ? n : 0);
    std::vector<double> u_buf(m), v_buf(m);

    SimLog log;
    log.n = n;
    log.m = m;
    const std::size_t samples = steps + 1;
    log.t.reserve(samples);
    log.h_m.reserve(samples);
    log.h_sat.reserve(samples);
    if (!opt.light) {
      log.x.reserve(samples * n);
      log.xr.reserve(samples * n);
      log.u.reserve(samples * m);
      log.v.reserve(samples * m);
      log.k_hat.reserve(samples * mn);
      log.e_norm.reserve(samples);
      log.phi_e.reserve(samples);
      log.phi_x.reserve(samples);
      log.phi_u.reserve(samples);
      log.u_norm.reserve(samples);
      log.v_e.reserve(samples);
      log.k_hat_fro.reserve(samples);
      log.sat.reserve(samples);
      if (opt.oracle) log.v_total.reserve(samples);
    }

    // Records sample k using the stage-1 byproducts. Returns false when the
    // trajectory must stop (true-error barrier contact or non-finite state).
    auto log_sample = [&](std::size_t k, const StageOut& out) -> bool {
      const double t = static_cast<double>(k) * table_.dt;
      const double* x = y.data();
      const double* xr = y.data() + n;
      const double* kh = y.data() + 2 * n;

      for (std::size_t i = 0; i < dim; ++i) {
        if (!std::isfinite(y[i])) {
          log.nonfinite_t = t;
          return false;
        }
      }

      // Stopping rule uses the true error: once the physical trajectory leaves
      // the barrier set the certificate is void and the run ends. The logged
      // margins stay the measured ones so violation statistics see exactly
      // what the controller saw.
      double quad = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += fm_.p[i * n + j] * (x[j] - xr[j]);
        quad += (x[i] - xr[i]) * acc;
      }
      if (table_.phi_pr2[2 * k] - quad <= fm_.denom_floor) {
        log.breach_t = t;
        return false;
      }

      double k_fro2 = 0.0;
      for (std::size_t i = 0; i < mn; ++i) k_fro2 += kh[i] * kh[i];
      const double k_fro = std::sqrt(k_fro2);
      log.max_k_hat_fro = std::max(log.max_k_hat_fro, k_fro);

      log.t.push_back(t);
      log.h_m.push_back(out.h_m);
      log.h_sat.push_back(out.h_sat);
      if (opt.light) return true;

      double en2 = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double ei = x[i] - xr[i];
        en2 += ei * ei;
        log.x.push_back(x[i]);
      }
      for (std::size_t i = 0; i < n; ++i) log.xr.push_back(xr[i]);
      double un2 = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        log.u.push_back(u_buf[i]);
        log.v.push_back(v_buf[i]);
        un2 += u_buf[i] * u_buf[i];
      }
      for (std::size_t i = 0; i < mn; ++i) log.k_hat.push_back(kh[i]);
      log.e_norm.push_back(std::sqrt(en2));
      log.phi_e.push_back(table_.phi_e[2 * k]);
      log.phi_x.push_back(sc_.constraints.phi_x.eval(t).value);
      log.phi_u.push_back(table_.phi_u[2 * k]);
      const double u_norm = std::sqrt(un2);
      log.u_norm.push_back(u_norm);
      log.v_e.push_back(out.v_e);
      log.k_hat_fro.push_back(k_fro);
      // Saturation flag: the applied input sits on the envelope (1e-12 relative).
      const double phi_u_k = table_.phi_u[2 * k];
      log.sat.push_back(u_norm >= phi_u_k * (1.0 - 1e-12) ? 1 : 0);
      if (opt.oracle) {
        // V = (1/2) log(phi'^2 / (phi'^2 - e'Pe)) + tr(K~' Gamma^{-1} K~).
        double tr = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          for (std::size_t i = 0; i < m; ++i) {
            const double ktil_i = kh[i * n + j] - pm_.gains.k_x(i, j);
            for (std::size_t i2 = 0; i2 < m; ++i2) {
              const double ktil_i2 = kh[i2 * n + j] - pm_.gains.k_x(i2, j);
              tr += ktil_i * pm_.gamma_inv(i, i2) * ktil_i2;
            }
          }
        }
        log.v_total.push_back(0.5 * out.v_e + tr);
      }
      return true;
    };

    StageOut out;
    out.u = u_buf.data();
    out.v = v_buf.data();

    try {
      for (std::size_t k = 0; k <= steps; ++k) {
        if (noisy && (k % static_cast<std::size_t>(hold) == 0)) {
          for (std::size_t i = 0; i < n; ++i) noise[i] = noise_scale * gs.next();
        }
        const double* np = noisy ? noise.data() : nullptr;
        const std::size_t h0 = 2 * k;

        stage_map(fm_, table_.at(h0), y.data(), np, k1.data(), ws_, log.counters, &out);
        if (!log_sample(k, out)) break;
        if (k == steps) break;

        const double dt = table_.dt;
        for (std::size_t i = 0; i < dim; ++i) ytmp[i] = y[i] + 0.5 * dt * k1[i];
        stage_map(fm_, table_.at(h0 + 1), ytmp.data(), np, k2.data(), ws_, log.counters, nullptr);
        for (std::size_t i = 0; i < dim; ++i) ytmp[i] = y[i] + 0.5 * dt * k2[i];
        stage_map(fm_, table_.at(h0 + 1), ytmp.data(), np, k3.data(), ws_, log.counters, nullptr);
        for (std::size_t i = 0; i < dim; ++i) ytmp[i] = y[i] + dt * k3[i];
        stage_map(fm_, table_.at(h0 + 2), ytmp.data(), np, k4.data(), ws_, log.counters, nullptr);
        for (std::size_t i = 0; i < dim; ++i) {
          y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }

        // Discretization can step the gain slightly past the ball the
        // projection protects in continuous time; pull it back radially.
        double k_fro2 = 0.0;
        for (std::size_t i = 2 * n; i < dim; ++i) k_fro2 += y[i] * y[i];
        if (k_fro2 > fm_.k_bar * fm_.k_bar) {
          const double s = fm_.k_bar / std::sqrt(k_fro2);
          for (std::size_t i = 2 * n; i < dim; ++i) y[i] *= s;
          ++log.counters.radial_clamp_hits;
        }
      }
    } catch (const BarrierBreach& ex) {
      log.breach_t = ex.t;
    }
    return log;
  }

 private:
  const Scenario& sc_;
  const PreparedModel& pm_;
  FlatModel fm_;
  SignalTable table_;
  Workspace ws_;
};

}  // namespace

SimLog run(const Scenario& sc, const PreparedModel& pm, const RunOptions& opt) {
  Engine engine(sc, pm);
  return engine.run(opt);
}

StageEval eval_stage(const Scenario& sc, const PreparedModel& pm, double t, const Matrix& x,
                     const Matrix& xr, const Matrix& k_hat, const std::vector<double>* noise) {
  const std::size_t n = sc.n();
  const std::size_t m = sc.m();
  if (x.rows() != n || x.cols() != 1 || xr.rows() != n || xr.cols() != 1 ||
      k_hat.rows() != m || k_hat.cols() != n) {
    throw DimensionMismatch("eval_stage state dimensions");
  }
  if (noise && noise->size() != n) throw DimensionMismatch("eval_stage noise dimension");

  FlatModel fm(sc, pm);
  Workspace ws(fm);
  SafeguardCounters counters;

  const auto pe = sc.constraints.phi_e.eval_for_control(t, sc.constraints.clamp_floor);
  StageSignals sig;
  sig.t = t;
  sig.phi_e = pe.value;
  sig.phi_e_dot = pe.derivative;
  sig.phi_pr2 = pe.value * pe.value * pm.constants.lambda_min_P;
  sig.phi_u = sc.constraints.phi_u.eval(t).value;
  std::vector<double> r_vals = eval_values(sc.reference, t);
  sig.r = r_vals.data();
  std::vector<double> d_vals;
  if (!sc.disturbance.empty()) {
    d_vals = eval_values(sc.disturbance, t);
    sig.d = d_vals.data();
  }

  std::vector<double> y(2 * n + m * n), dy(2 * n + m * n);
  for (std::size_t i = 0; i < n; ++i) y[i] = x(i, 0);
  for (std::size_t i = 0; i < n; ++i) y[n + i] = xr(i, 0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) y[2 * n + i * n + j] = k_hat(i, j);
  }

  StageEval ev;
  ev.u = Matrix::zero(m, 1);
  ev.v = Matrix::zero(m, 1);
  std::vector<double> u_buf(m), v_buf(m);
  StageOut out;
  out.u = u_buf.data();
  out.v = v_buf.data();
  stage_map(fm, sig, y.data(), noise ? noise->data() : nullptr, dy.data(), ws, counters, &out);

  ev.dx = Matrix::zero(n, 1);
  ev.dxr = Matrix::zero(n, 1);
  ev.dk = Matrix::zero(m, n);
  for (std::size_t i = 0; i < n; ++i) ev.dx(i, 0) = dy[i];
  for (std::size_t i = 0; i < n; ++i) ev.dxr(i, 0) = dy[n + i];
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) ev.dk(i, j) = dy[2 * n + i * n + j];
  }
  for (std::size_t i = 0; i < m; ++i) {
    ev.u(i, 0) = u_buf[i];
    ev.v(i, 0) = v_buf[i];
  }
  ev.delta_u = ev.u - ev.v;
  ev.saturated = out.saturated;
  ev.h_m = out.h_m;
  ev.denom = out.denom;
  ev.v_e = out.v_e;
  ev.phi_e = sig.phi_e;
  ev.phi_e_dot = sig.phi_e_dot;
  ev.phi_u = sig.phi_u;
  return ev;
}

std::string log_csv(const SimLog& log) {
  if (log.x.empty() && log.samples() > 0) {
    throw ValidationError("CSV export needs a full log, not a light one");
  }
  std::ostringstream os;
  os << "t";
  for (std::size_t i = 1; i <= log.n; ++i) os << ",x_" << i;
  for (std::size_t i = 1; i <= log.n; ++i) os << ",xr_" << i;
  os << ",e_norm,phi_e";
  for (std::size_t i = 1; i <= log.m; ++i) os << ",u_" << i;
  os << ",u_norm,phi_u,sat,V_e,h_m,k_hat_fro";
  const bool oracle = !log.v_total.empty();
  if (oracle) os << ",V_total";
  os << "\n";
  for (std::size_t k = 0; k < log.samples(); ++k) {
    os << format_real(log.t[k]);
    for (std::size_t i = 0; i < log.n; ++i) os << "," << format_real(log.x[k * log.n + i]);
    for (std::size_t i = 0; i < log.n; ++i) os << "," << format_real(log.xr[k * log.n + i]);
    os << "," << format_real(log.e_norm[k]) << "," << format_real(log.phi_e[k]);
    for (std::size_t i = 0; i < log.m; ++i) os << "," << format_real(log.u[k * log.m + i]);
    os << "," << format_real(log.u_norm[k]) << "," << format_real(log.phi_u[k]) << ","
       << (log.sat[k] ? 1 : 0) << "," << format_real(log.v_e[k]) << "," << format_real(log.h_m[k])
       << "," << format_real(log.k_hat_fro[k]);
    if (oracle) os << "," << format_real(log.v_total[k]);
    os << "\n";
  }
  return os.str();
}

std::uint64_t trial_seed(std::uint64_t master_seed, std::uint64_t trial_index) {
  return splitmix64(master_seed + splitmix64(trial_index + 1));
}

double margin_h(const Matrix& e_m, const Matrix& p, double phi_e_prime) {
  if (e_m.cols() != 1 || p.rows() != p.cols() || p.rows() != e_m.rows()) {
    throw ValidationError("margin needs a column error and a matching square weight");
  }
  double quad = 0.0;
  for (std::size_t i = 0; i < p.rows(); ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < p.cols(); ++j) acc += p(i, j) * e_m(j, 0);
    quad += e_m(i, 0) * acc;
  }
  return phi_e_prime * phi_e_prime - quad;
}

double satisfaction_probability(const std::vector<double>& margins) {
  if (margins.empty()) throw EmptyWindow("satisfaction probability over an empty window");
  std::size_t positive = 0;
  for (double h : margins) {
    if (h > 0.0) ++positive;
  }
  return static_cast<double>(positive) / static_cast<double>(margins.size());
}

MonteCarloReport monte_carlo(const Scenario& sc, const PreparedModel& pm, std::size_t n_trials,
                             double sigma2, std::uint64_t master_seed,
                             std::optional<std::pair<double, double>> window) {
  if (n_trials == 0) throw ValidationError("monte carlo needs at least one trial");
  if (sigma2 < 0.0) throw ValidationError("noise level must be non-negative");

  MonteCarloReport rep;
  rep.sigma2 = sigma2;
  rep.master_seed = master_seed;
  double a = 0.0, b = sc.horizon;
  if (window) {
    a = window->first;
    b = window->second;
  } else if (sc.noise && sc.noise->has_window) {
    a = sc.noise->window_a;
    b = sc.noise->window_b;
  }
  if (!(a >= 0.0 && a < b && b <= sc.horizon + 1e-9)) {
    throw ValidationError("satisfaction window must satisfy 0 <= a < b <= horizon");
  }
  rep.window_a = a;
  rep.window_b = b;
  const std::size_t steps = sc.steps();
  const auto k_lo = static_cast<std::size_t>(std::ceil((a - 1e-9) / sc.dt));
  auto k_hi = static_cast<std::size_t>(std::floor((b + 1e-9) / sc.dt));
  k_hi = std::min(k_hi, steps);
  if (k_hi < k_lo) throw ValidationError("satisfaction window contains no samples");
  rep.window_samples = k_hi - k_lo + 1;

  Engine engine(sc, pm);
  rep.trials.reserve(n_trials);
  double sum_sat = 0.0;
  for (std::size_t i = 0; i < n_trials; ++i) {
    RunOptions opt;
    opt.light = true;
    opt.sigma2 = sigma2;
    opt.seed = trial_seed(master_seed, i);
    SimLog log = engine.run(opt);
    TrialStat stat;
    stat.max_k_hat_fro = log.max_k_hat_fro;
    if (log.breach_t) {
      stat.breached = true;
      stat.breach_t = *log.breach_t;
      ++rep.breached_trials;
    }
    if (log.nonfinite_t && !stat.breached) {
      // A numerically exploded trial counts like a breach at the event time.
      stat.breached = true;
      stat.breach_t = *log.nonfinite_t;
      ++rep.breached_trials;
    }
    std::size_t satisfied = 0;
    for (std::size_t k = k_lo; k <= k_hi && k < log.h_m.size(); ++k) {
      if (log.h_m[k] > 0.0) ++satisfied;
    }
    stat.satisfaction = static_cast<double>(satisfied) / static_cast<double>(rep.window_samples);
    sum_sat += stat.satisfaction;
    rep.max_k_hat_fro = std::max(rep.max_k_hat_fro, stat.max_k_hat_fro);
    rep.trials.push_back(stat);
  }
  rep.p_avg = sum_sat / static_cast<double>(n_trials);
  return rep;
}

std::string monte_carlo_csv(const MonteCarloReport& rep) {
  std::ostringstream os;
  os << "sigma2,trial,satisfaction\n";
  for (std::size_t i = 0; i < rep.trials.size(); ++i) {
    os << format_real(rep.sigma2) << "," << i << "," << format_real(rep.trials[i].satisfaction)
       << "\n";
  }
  os << "# p_avg=" << format_real(rep.p_avg) << " trials=" << rep.trials.size()
     << " window=[" << format_real(rep.window_a) << "," << format_real(rep.window_b)
     << "] window_samples=" << rep.window_samples << " breached=" << rep.breached_trials
     << " max_k_hat_fro=" << format_real(rep.max_k_hat_fro)
     << " master_seed=" << rep.master_seed << "\n";
  return os.str();
}

}  // namespace cmrac
