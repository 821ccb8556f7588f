#pragma once

// Splitting v = V_L + Z_L, U = U_L + Y_L along a trajectory and the Lyapunov
// quantities y_L, xi_L, eta_L entering the energy inequality
//   dy_L/dt + beta [y_L + ||V_L||^2_{H^1_0}] <= C y_L xi_L + C eta_L.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "sburgers/dynamics.hpp"
#include "sburgers/errors.hpp"
#include "sburgers/noise.hpp"
#include "sburgers/parallel.hpp"
#include "sburgers/spectral.hpp"

namespace sburgers {

struct AuxState {
  ConvolutionState conv;
  SpectralField V;  // V_L = v - Z_L
  double UL = 0.0;  // U_L = U - Y_L

  /// Z_L(0) = 0, Y_L(0) = 0, so V_L(0) = v0 and U_L(0) = U0.
  static AuxState start(const State& s0, double L) {
    if (!(L >= 0.0)) throw DomainError("AuxState: L must be >= 0");
    return {ConvolutionState::zero(s0.v.modes(), L), s0.v, s0.U};
  }
};

/// Convolution recursions for one damping level with precomputed step constants.
class AuxStepper {
 public:
  AuxStepper(const ModelParams& p, double L) : nu_(p.nu), dt_(p.dt), L_(L) {
    if (!(L >= 0.0)) throw DomainError("AuxStepper: L must be >= 0");
    const auto spec = p.spectrum();
    damp_.resize(p.K);
    weight_.resize(p.K);
    for (std::size_t k = 1; k <= p.K; ++k) {
      const double a = L + spec.decay_rate(k);
      damp_[k - 1] = std::exp(-a * p.dt);
      weight_[k - 1] = noise_weight(a, p.dt, p.noise_scheme);
    }
    damp_Y_ = std::exp(-(L + p.nu) * p.dt);
    weight_Y_ = noise_weight(L + p.nu, p.dt, p.noise_scheme);
  }

  double L() const noexcept { return L_; }

  /// `gdw` = coefficients of g1(s) dW1 and `g0` = g0(s), both at the step start s;
  /// `next` is the main state after the same step.
  AuxState advance(const AuxState& aux, std::span<const double> gdw, double g0, const NoiseIncrement& inc,
                   const State& next) const {
    const std::size_t K = damp_.size();
    if (aux.conv.Z.modes() != K || gdw.size() != K || next.v.modes() != K)
      throw SizeError("advance_aux: K mismatch");
    AuxState r = aux;
    for (std::size_t i = 0; i < K; ++i) r.conv.Z[i] = damp_[i] * aux.conv.Z[i] + weight_[i] * gdw[i];
    r.conv.Y = damp_Y_ * aux.conv.Y + weight_Y_ * g0 * inc.dW0;
    r.V = next.v - r.conv.Z;
    r.UL = next.U - r.conv.Y;
    return r;
  }

 private:
  double nu_, dt_, L_;
  std::vector<double> damp_, weight_;
  double damp_Y_ = 1.0, weight_Y_ = 1.0;
};

/// Advances Z_L, Y_L with the diffusion evaluated at the step start `s`, then re-splits
/// the post-step state `next`.  `inc` must be the increment that took s to next.
inline AuxState advance_aux(const AuxState& aux, const State& s, const State& next, const ModelParams& p,
                            const NoiseIncrement& inc) {
  const auto gdw = project_noise(eval_g1(p.g1, s, p.grid()), inc.dW);
  return AuxStepper(p, aux.conv.L).advance(aux, gdw, eval_g0(p.g0, s), inc, next);
}

/// y_L = ||V_L||^2 + U_L^2.
inline double lyapunov(const AuxState& aux) { return aux.V.norm2() + aux.UL * aux.UL; }

enum class XiExponent {
  eight_thirds,  // ||Z||_{L4}^{8/3}, what the interpolation step produces
  two,           // ||Z||_{L4}^{8/4} as written in the statement
};

inline double xi_exponent_value(XiExponent m) { return m == XiExponent::two ? 2.0 : 8.0 / 3.0; }

/// xi_L = |Y_L| + ||Z_L||^2 + ||Z_L|| + ||Z_L||_{L4}^q.
inline double xi(const AuxState& aux, XiExponent mode = XiExponent::eight_thirds) {
  const double z = aux.conv.Z.norm();
  return std::abs(aux.conv.Y) + z * z + z + std::pow(norm_l4(aux.conv.Z), xi_exponent_value(mode));
}

/// eta_L = (1 + L^2)(Y_L^4 + ||Z_L||_{L4}^4) + 1.
inline double eta(const AuxState& aux) {
  const double L = aux.conv.L;
  const double y2 = aux.conv.Y * aux.conv.Y;
  const double z4 = std::pow(norm_l4(aux.conv.Z), 4.0);
  return (1.0 + L * L) * (y2 * y2 + z4) + 1.0;
}

struct EnergyRecord {
  double t = 0.0;
  double y = 0.0;
  double xi = 0.0;
  double eta = 1.0;
  double h10 = 0.0;  // ||V_L||^2_{H^1_0}
};

using EnergyLedger = std::vector<EnergyRecord>;

inline EnergyRecord energy_record(const AuxState& aux, double t, XiExponent mode = XiExponent::eight_thirds) {
  const double h1 = norm_fractional(aux.V, 0.5);
  return {t, lyapunov(aux), xi(aux, mode), eta(aux), h1 * h1};
}

/// r_n = (y_{n+1} - y_n)/dt + beta (y_n + h10_n) - C y_n xi_n - C eta_n, n = 0..size-2.
inline std::vector<double> energy_residual(std::span<const EnergyRecord> ledger, double dt, double beta, double C) {
  if (ledger.size() < 2) throw SizeError("energy_residual: need at least 2 records");
  std::vector<double> r(ledger.size() - 1);
  for (std::size_t n = 0; n + 1 < ledger.size(); ++n) {
    const auto& e = ledger[n];
    r[n] = (ledger[n + 1].y - e.y) / dt + beta * (e.y + e.h10) - C * e.y * e.xi - C * e.eta;
  }
  return r;
}

/// Steps where the residual exceeds rel_tol times the largest term of that step.
inline std::size_t energy_violations(std::span<const EnergyRecord> ledger, double dt, double beta, double C,
                                     double rel_tol = 1e-6) {
  const auto r = energy_residual(ledger, dt, beta, C);
  std::size_t bad = 0;
  for (std::size_t n = 0; n < r.size(); ++n) {
    const auto& e = ledger[n];
    const double scale = std::max({std::abs((ledger[n + 1].y - e.y) / dt), beta * (e.y + e.h10),
                                   C * e.y * e.xi, C * e.eta});
    if (r[n] > rel_tol * scale) ++bad;
  }
  return bad;
}

struct EnergyFit {
  double C = 0.0;        // smallest grid value with zero violations
  double C_exact = 0.0;  // max_n of the ratio that C must dominate
};

/// Grid search over C = 10^{j/10}, j = -60..60, for the smallest C with no violations at
/// fixed beta.  Throws DomainError when no grid value works.
inline EnergyFit fit_energy_constant(std::span<const EnergyRecord> ledger, double dt, double beta,
                                     double rel_tol = 1e-6) {
  if (ledger.size() < 2) throw SizeError("fit_energy_constant: need at least 2 records");
  EnergyFit fit;
  for (std::size_t n = 0; n + 1 < ledger.size(); ++n) {
    const auto& e = ledger[n];
    const double lhs = (ledger[n + 1].y - e.y) / dt + beta * (e.y + e.h10);
    fit.C_exact = std::max(fit.C_exact, lhs / (e.y * e.xi + e.eta));
  }
  // Violations are monotone non-increasing in C, so bisect on the grid index.
  int lo = -60, hi = 60;
  auto grid = [](int j) { return std::pow(10.0, j / 10.0); };
  if (energy_violations(ledger, dt, beta, grid(hi), rel_tol) != 0)
    throw DomainError("fit_energy_constant: no C <= 1e6 satisfies the inequality");
  if (energy_violations(ledger, dt, beta, grid(lo), rel_tol) == 0) {
    fit.C = grid(lo);
    return fit;
  }
  while (hi - lo > 1) {
    const int mid = (lo + hi) / 2;
    if (energy_violations(ledger, dt, beta, grid(mid), rel_tol) == 0)
      hi = mid;
    else
      lo = mid;
  }
  fit.C = grid(hi);
  return fit;
}

struct LedgerRun {
  Trajectory trajectory;
  EnergyLedger ledger;
};

/// Simulates and co-simulates the splitting at damping L, recording the ledger every step.
inline LedgerRun simulate_with_ledger(const ModelParams& p, const State& init, double T, RngSeed seed, double L,
                                      XiExponent mode = XiExponent::eight_thirds, SimulateOptions opts = {}) {
  LedgerRun run;
  const AuxStepper aux_stepper(p, L);
  AuxState aux = AuxState::start(init, L);
  run.ledger.push_back(energy_record(aux, 0.0, mode));
  const std::size_t N = p.grid();
  auto user_hook = opts.on_step;
  opts.on_step = [&](std::size_t n, const State& s, const NoiseIncrement& inc, const State& next) {
    const auto gdw = project_noise(eval_g1(p.g1, s, N), inc.dW);
    aux = aux_stepper.advance(aux, gdw, eval_g0(p.g0, s), inc, next);
    run.ledger.push_back(energy_record(aux, static_cast<double>(n) * p.dt, mode));
    if (user_hook) user_hook(n, s, inc, next);
  };
  run.trajectory = simulate(p, init, T, seed, opts);
  return run;
}

/// Centered-difference residual of 1/2 d||v||^2/dt + nu ||v||^2_{H^1_0} - U ||v||^2 at the
/// interior samples of a deterministic trajectory stored every step.
inline std::vector<double> energy_identity_residual(const Trajectory& tr, double nu) {
  if (tr.states.size() < 3 || tr.states.size() != tr.times.size())
    throw SizeError("energy_identity_residual: need >= 3 stored states");
  std::vector<double> r;
  r.reserve(tr.states.size() - 2);
  for (std::size_t n = 1; n + 1 < tr.states.size(); ++n) {
    const auto& s = tr.states[n];
    const double ddt = (tr.states[n + 1].v.norm2() - tr.states[n - 1].v.norm2()) / (tr.times[n + 1] - tr.times[n - 1]);
    const double h1 = norm_fractional(s.v, 0.5);
    r.push_back(0.5 * ddt + nu * h1 * h1 - s.U * s.v.norm2());
  }
  return r;
}

struct MomentRow {
  double L = 0.0;
  double estimate = 0.0;  // max over the time grid of the Monte Carlo mean
  double stderr_ = 0.0;   // standard error at the maximising time
  double t_max = 0.0;
};

struct MomentScanOptions {
  std::size_t sample_every = 10;
  std::size_t threads = 1;
  /// Starting state; empty means X(0) = 0.
  std::optional<State> init;
};

/// For each L, sup_t E(||Z_L(t)||^p_{H^{1/4}} + |Y_L(t)|^p), the sup taken over the
/// sampled times.  Path i uses stream seed.stream_id + i and drives all L levels.
inline std::vector<MomentRow> moment_scan(const ModelParams& p, std::span<const double> L_values, double p_exp,
                                          double T, std::size_t n_paths, RngSeed seed,
                                          const MomentScanOptions& opts = {}) {
  if (!(p_exp >= 2.0)) throw DomainError("moment_scan: moment order must be >= 2");
  if (n_paths < 2) throw DomainError("moment_scan: need at least 2 paths for error bars");
  const std::size_t nL = L_values.size();
  const std::size_t steps = step_count(T, p.dt);
  const std::size_t every = std::max<std::size_t>(opts.sample_every, 1);
  const std::size_t nT = steps / every + 1;
  const State init = opts.init.value_or(State::zero(p.K));
  const std::size_t N = p.grid();

  std::vector<AuxStepper> steppers;
  for (double L : L_values) steppers.emplace_back(p, L);

  auto moment = [&](const AuxState& a) {
    return std::pow(norm_fractional(a.conv.Z, 0.125), p_exp) + std::pow(std::abs(a.conv.Y), p_exp);
  };

  // samples[path][l * nT + t]
  std::vector<std::vector<double>> samples(n_paths, std::vector<double>(nL * nT, 0.0));
  parallel_for(n_paths, opts.threads, [&](std::size_t path) {
    auto& out = samples[path];
    std::vector<AuxState> aux;
    for (double L : L_values) aux.push_back(AuxState::start(init, L));
    for (std::size_t l = 0; l < nL; ++l) out[l * nT] = moment(aux[l]);
    SimulateOptions so;
    so.store_states = false;
    so.record_every = steps + 1;
    so.on_step = [&](std::size_t n, const State& s, const NoiseIncrement& inc, const State& next) {
      const auto gdw = project_noise(eval_g1(p.g1, s, N), inc.dW);
      const double g0 = eval_g0(p.g0, s);
      for (std::size_t l = 0; l < nL; ++l) {
        aux[l] = steppers[l].advance(aux[l], gdw, g0, inc, next);
        if (n % every == 0) out[l * nT + n / every] = moment(aux[l]);
      }
    };
    simulate(p, init, T, {seed.seed, seed.stream_id + path}, so);
  });

  std::vector<MomentRow> rows;
  const double n = static_cast<double>(n_paths);
  for (std::size_t l = 0; l < nL; ++l) {
    MomentRow row{L_values[l], -1.0, 0.0, 0.0};
    for (std::size_t t = 0; t < nT; ++t) {
      double s = 0.0, s2 = 0.0;
      for (std::size_t i = 0; i < n_paths; ++i) {
        const double x = samples[i][l * nT + t];
        s += x;
        s2 += x * x;
      }
      const double mean = s / n;
      const double var = std::max(0.0, (s2 - n * mean * mean) / (n - 1.0));
      if (mean > row.estimate) {
        row.estimate = mean;
        row.stderr_ = std::sqrt(var / n);
        row.t_max = static_cast<double>(t * every) * p.dt;
      }
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace sburgers
