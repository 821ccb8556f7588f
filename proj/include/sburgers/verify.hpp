#pragma once

// Invariant suite behind the `verify` subcommand: each check reports the measured
// quantity, the tolerance it is held to, and whether it passed.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "sburgers/config.hpp"
#include "sburgers/decomposition.hpp"
#include "sburgers/dynamics.hpp"
#include "sburgers/ergodicity.hpp"
#include "sburgers/noise.hpp"
#include "sburgers/spectral.hpp"

namespace sburgers {

struct CheckResult {
  std::string module;
  std::string name;
  double measured = 0.0;
  std::string relation;  // "<=" or ">="
  double tolerance = 0.0;
  bool passed = false;
  std::string error;  // exception text when the check itself threw
};

namespace detail {

inline SpectralField random_field(Generator& g, std::size_t K, double decay = 0.0) {
  std::vector<double> c(K);
  for (std::size_t k = 1; k <= K; ++k) c[k - 1] = g.normal() / std::pow(static_cast<double>(k), decay);
  return SpectralField(std::move(c));
}

inline double grid_l2(const GridField& g) {
  double s = 0.0;
  for (std::size_t j = 1; j < g.intervals(); ++j) s += g[j] * g[j];
  return std::sqrt(s / static_cast<double>(g.intervals()));
}

}  // namespace detail

inline std::vector<CheckResult> run_invariant_suite(const RunConfig& cfg) {
  std::vector<CheckResult> out;
  auto check = [&](const char* module, const char* name, const char* rel, double tol, auto&& measure) {
    CheckResult r{module, name, NAN, rel, tol, false, {}};
    try {
      r.measured = measure();
      r.passed = std::string(rel) == "<=" ? r.measured <= tol : r.measured >= tol;
    } catch (const std::exception& e) {
      r.error = e.what();
    }
    out.push_back(std::move(r));
  };

  const ModelParams& mp = cfg.model;
  const std::size_t K = mp.K, N = mp.grid();
  const OperatorSpectrum spec = mp.spectrum();
  Generator gen({cfg.seed, 0x5eed});

  // spectral
  check("spectral", "orthonormality_max_error", "<=", 1e-10, [&] {
    std::vector<GridField> e;
    for (std::size_t k = 1; k <= K; ++k) e.push_back(to_grid(SpectralField::basis(K, k), N));
    double worst = 0.0;
    for (std::size_t i = 0; i < K; ++i)
      for (std::size_t j = i; j < K; ++j) {
        double s = 0.0;
        for (std::size_t x = 1; x < N; ++x) s += e[i][x] * e[j][x];
        worst = std::max(worst, std::abs(s / static_cast<double>(N) - (i == j ? 1.0 : 0.0)));
      }
    return worst;
  });
  check("spectral", "parseval_max_error", "<=", 1e-10, [&] {
    double worst = 0.0;
    for (int r = 0; r < 20; ++r) {
      const auto f = detail::random_field(gen, K);
      worst = std::max(worst, std::abs(detail::grid_l2(to_grid(f, N)) - f.norm()));
    }
    return worst;
  });
  check("spectral", "round_trip_max_error", "<=", 1e-10, [&] {
    double worst = 0.0;
    for (int r = 0; r < 20; ++r) {
      const auto f = detail::random_field(gen, K);
      worst = std::max(worst, (from_grid(to_grid(f, N), K) - f).norm());
    }
    return worst;
  });
  check("spectral", "fast_vs_direct_max_difference", "<=", 1e-10, [&] {
    const auto f = detail::random_field(gen, K);
    const auto a = to_grid(f, N, TransformPath::fast), b = to_grid(f, N, TransformPath::direct);
    double worst = 0.0;
    for (std::size_t j = 0; j <= N; ++j) worst = std::max(worst, std::abs(a[j] - b[j]));
    worst = std::max(worst, (from_grid(a, K, TransformPath::fast) - from_grid(a, K, TransformPath::direct)).norm());
    const auto ca = cosine_quadrature(a, K, TransformPath::fast), cb = cosine_quadrature(a, K, TransformPath::direct);
    for (std::size_t k = 0; k < K; ++k) worst = std::max(worst, std::abs(ca[k] - cb[k]));
    return worst;
  });
  check("spectral", "semigroup_law_max_error", "<=", 1e-12, [&] {
    double worst = 0.0;
    for (int r = 0; r < 10; ++r) {
      const auto f = detail::random_field(gen, K);
      worst = std::max(worst,
                       (apply_semigroup(apply_semigroup(f, 0.05, spec), 0.05, spec) - apply_semigroup(f, 0.1, spec))
                           .norm());
    }
    return worst;
  });
  check("spectral", "contraction_max_excess", "<=", 1e-14, [&] {
    double worst = 0.0;
    for (int r = 0; r < 10; ++r) {
      const auto f = detail::random_field(gen, K);
      for (double t : {0.0, 1e-3, 1e-2, 0.1, 1.0})
        worst = std::max(worst, apply_semigroup(f, t, spec).norm() / f.norm() - spec.factor(1, t));
    }
    return worst;
  });
  check("spectral", "lemma1_violations", "<=", 0.0, [&] {
    const double C = derivative_semigroup_constant(cfg.lemma1_times, spec);
    std::size_t bad = 0;
    for (int r = 0; r < 20; ++r) {
      GridField psi(N);
      for (double& x : psi.values()) x = gen.normal();
      for (double t : cfg.lemma1_times)
        if (semigroup_of_derivative(psi, t, spec, K).norm() >
            (1.0 + derivative_bound_roundoff) * C / std::sqrt(t) * norm_l1(psi))
          ++bad;
    }
    return static_cast<double>(bad);
  });
  check("spectral", "skew_symmetry_max_relative", "<=", 1e-8, [&] {
    double worst = 0.0;
    for (int r = 0; r < 20; ++r) {
      const auto v = detail::random_field(gen, K, r % 2);
      const auto b = dx_square(v, N);
      worst = std::max(worst, std::abs(inner(b, v)) / (b.norm() * v.norm()));
    }
    return worst;
  });
  check("spectral", "poincare_max_relative_excess", "<=", 1e-14, [&] {
    double worst = 0.0;
    for (int r = 0; r < 20; ++r) {
      const auto f = detail::random_field(gen, K);
      const double h1 = norm_fractional(f, 0.5);
      worst = std::max(worst, (pi * pi * f.norm2() - h1 * h1) / (h1 * h1));
    }
    return worst;
  });

  // noise
  const double dt_n = 0.01;
  std::vector<double> draws;
  {
    Generator g({cfg.seed, 1});
    NoiseIncrement inc;
    while (draws.size() < 100000) {
      sample_increment_into(g, dt_n, K, inc);
      draws.push_back(inc.dW0);
      draws.insert(draws.end(), inc.dW.begin(), inc.dW.end());
    }
  }
  const double nd = static_cast<double>(draws.size());
  double mean = 0.0;
  for (double x : draws) mean += x;
  mean /= nd;
  double m2 = 0.0, m4 = 0.0;
  for (double x : draws) {
    const double d = (x - mean) * (x - mean);
    m2 += d;
    m4 += d * d;
  }
  m2 /= nd;
  m4 /= nd;
  check("noise", "increment_mean_zscore", "<=", 4.0, [&] { return std::abs(mean) / std::sqrt(dt_n / nd); });
  check("noise", "increment_variance_zscore", "<=", 4.0,
        [&] { return std::abs(m2 * nd / (nd - 1) - dt_n) / std::sqrt((m4 - m2 * m2) / nd); });
  check("noise", "stream_correlation_zscore", "<=", 4.0, [&] {
    Generator a({cfg.seed, 2}), b({cfg.seed, 3});
    const std::size_t n = 100000;
    double sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) sxy += a.normal() * b.normal();
    return std::abs(sxy / static_cast<double>(n)) * std::sqrt(static_cast<double>(n));
  });
  check("noise", "reproducibility_mismatches", "<=", 0.0, [&] {
    Generator a({cfg.seed, 4}), b({cfg.seed, 4});
    std::size_t bad = 0;
    for (int i = 0; i < 1000; ++i) {
      const auto x = sample_increment(a, mp.dt, K), y = sample_increment(b, mp.dt, K);
      if (x.dW0 != y.dW0 || x.dW != y.dW) ++bad;
    }
    return static_cast<double>(bad);
  });
  check("noise", "ou_scalar_variance_zscore", "<=", 3.0, [&] {
    const double sigma = 0.1, dt = 1e-3, T = 2.0;
    const std::size_t n = 2000, steps = 2000;
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      Generator g({cfg.seed, 100 + i});
      auto cs = ConvolutionState::zero(0, 0.0);
      NoiseIncrement inc;
      for (std::size_t s = 0; s < steps; ++s) {
        sample_increment_into(g, dt, 0, inc);
        cs = convolution_step_y(cs, sigma, inc, mp.nu, mp.noise_scheme);
      }
      y[i] = cs.Y;
    }
    double v2 = 0.0, v4 = 0.0;
    for (double x : y) {
      v2 += x * x;
      v4 += x * x * x * x;
    }
    v2 /= static_cast<double>(n);
    v4 /= static_cast<double>(n);
    const double exact = sigma * sigma * -std::expm1(-2 * mp.nu * T) / (2 * mp.nu);
    return std::abs(v2 - exact) / std::sqrt((v4 - v2 * v2) / static_cast<double>(n));
  });

  // dynamics
  ModelParams quiet = mp;
  quiet.P = 0.0;
  quiet.g0 = quiet.g1 = DiffusionSpec::constant(0.0);
  quiet.cutoff.reset();
  const NoiseIncrement zero_inc{mp.dt, 0.0, std::vector<double>(K, 0.0)};
  check("dynamics", "linear_scheme_max_relative_error", "<=", 1e-13, [&] {
    ModelParams lin = quiet;
    lin.nonlinear = false;
    const Stepper st(lin);
    const auto f = detail::random_field(gen, K);
    State s{0.0, f};
    for (int n = 0; n < 4; ++n) s = st.step(s, zero_inc);
    double worst = 0.0;
    for (std::size_t k = 1; k <= K; ++k) {
      const double ex = spec.factor(k, 4 * mp.dt) * f[k - 1];
      if (ex != 0.0) worst = std::max(worst, std::abs(s.v[k - 1] - ex) / std::abs(ex));
    }
    return worst;
  });
  check("dynamics", "cutoff_equivalence_mismatches", "<=", 0.0, [&] {
    ModelParams cut = mp;
    cut.cutoff = 1000.0;
    ModelParams uncut = mp;
    uncut.cutoff.reset();
    const State z = cfg.initial.state(K);
    std::size_t bad = 0;
    for (std::uint64_t s = 0; s < 3; ++s)
      if (simulate(cut, z, 0.2, {cfg.seed, s}).states != simulate(uncut, z, 0.2, {cfg.seed, s}).states) ++bad;
    return static_cast<double>(bad);
  });
  check("dynamics", "determinism_mismatches", "<=", 0.0, [&] {
    const State z = cfg.initial.state(K);
    return simulate(mp, z, 0.2, {cfg.seed, 9}).states == simulate(mp, z, 0.2, {cfg.seed, 9}).states ? 0.0 : 1.0;
  });
  State decay_init{1.0, SpectralField::basis(K, 1)};
  if (K >= 2) decay_init.v[1] = 0.5;
  SimulateOptions last_only;
  last_only.record_every = std::numeric_limits<std::size_t>::max();
  check("dynamics", "deterministic_decay_final_l2norm", "<=", 1e-6,
        [&] { return simulate(quiet, decay_init, 5.0, {}, last_only).states.back().v.norm(); });
  check("dynamics", "deterministic_decay_U_vs_refined", "<=", 1e-3, [&] {
    ModelParams fine = quiet;
    fine.dt = quiet.dt / 10;
    return std::abs(simulate(quiet, decay_init, 5.0, {}, last_only).states.back().U -
                    simulate(fine, decay_init, 5.0, {}, last_only).states.back().U);
  });

  // decomposition
  check("decomposition", "splitting_identity_max_error", "<=", 1e-12, [&] {
    double worst = 0.0;
    const State z = cfg.initial.state(K);
    for (double L : cfg.L_values) {
      AuxState aux = AuxState::start(z, L);
      SimulateOptions o;
      o.store_states = false;
      o.on_step = [&](std::size_t, const State& s, const NoiseIncrement& inc, const State& next) {
        aux = advance_aux(aux, s, next, mp, inc);
        worst = std::max({worst, (aux.V + aux.conv.Z - next.v).norm(), std::abs(aux.UL + aux.conv.Y - next.U)});
      };
      simulate(mp, z, 0.2, {cfg.seed, 11}, o);
    }
    return worst;
  });
  check("decomposition", "zero_diffusion_reduction_max_error", "<=", 0.0, [&] {
    double worst = 0.0;
    AuxState aux = AuxState::start(decay_init, cfg.ledger_L);
    SimulateOptions o;
    o.store_states = false;
    o.on_step = [&](std::size_t, const State& s, const NoiseIncrement& inc, const State& next) {
      aux = advance_aux(aux, s, next, quiet, inc);
      worst = std::max({worst, aux.conv.Z.norm(), std::abs(aux.conv.Y), (aux.V - next.v).norm(),
                        std::abs(aux.UL - next.U)});
    };
    simulate(quiet, decay_init, 0.2, {}, o);
    return worst;
  });
  check("decomposition", "energy_identity_halving_ratio", ">=", 1.8, [&] {
    double r[2];
    for (int i = 0; i < 2; ++i) {
      ModelParams q = quiet;
      q.dt = 4e-4 / (1 << i);
      double worst = 0.0;
      for (double x : energy_identity_residual(simulate(q, decay_init, 0.5, {}), q.nu))
        worst = std::max(worst, std::abs(x));
      r[i] = worst;
    }
    return r[0] / r[1];
  });
  check("decomposition", "ledger_sign_violations", "<=", 0.0, [&] {
    const auto run = simulate_with_ledger(mp, cfg.initial.state(K), 0.2, {cfg.seed, 12}, cfg.ledger_L, cfg.xi_exponent);
    std::size_t bad = 0;
    for (const auto& e : run.ledger)
      if (!(e.y >= 0.0) || !(e.eta >= 1.0) || !std::isfinite(e.xi) || !std::isfinite(e.h10)) ++bad;
    return static_cast<double>(bad);
  });

  // ergodicity
  check("ergodicity", "tv_metric_violations", "<=", 0.0, [&] {
    auto random_measure = [&] {
      EmpiricalMeasure m;
      m.edges = uniform_edges(0.0, 1.0, 8);
      m.masses.resize(10);
      double s = 0.0;
      for (double& x : m.masses) s += (x = -std::log(gen.uniform()));
      for (double& x : m.masses) x /= s;
      return m;
    };
    std::size_t bad = 0;
    for (int i = 0; i < 500; ++i) {
      const auto a = random_measure(), b = random_measure(), c = random_measure();
      const double ab = tv_distance(a, b), ba = tv_distance(b, a);
      if (ab != ba || ab < 0.0 || ab > 1.0 || tv_distance(a, c) > ab + tv_distance(b, c) + 1e-15) ++bad;
    }
    return static_cast<double>(bad);
  });
  SimulateOptions every10;
  every10.record_every = 10;
  const auto tr = simulate(mp, cfg.initial.state(K), 2.0, {cfg.seed, 13}, every10);
  check("ergodicity", "occupation_mass_sum_error", "<=", 1e-12, [&] {
    double worst = 0.0;
    for (const auto& obs : cfg.observables) {
      const auto x = retained_values(tr, obs, 0.2);
      double s = 0.0;
      for (double q : occupation_measure(tr, obs, data_edges(x, cfg.bins), 0.2).masses) s += q;
      worst = std::max(worst, std::abs(s - 1.0));
    }
    return worst;
  });
  check("ergodicity", "tail_fraction_monotonicity_violations", "<=", 0.0, [&] {
    std::size_t bad = 0;
    double prev = 1.0;
    for (double M = 0.05; M <= 3.0; M += 0.05) {
      const double f = tail_fraction(tr, M, 0.2);
      if (f > prev) ++bad;
      prev = f;
    }
    return static_cast<double>(bad);
  });
  check("ergodicity", "occupation_idempotence_max_difference", "<=", 0.0, [&] {
    const ObservableSpec U{};
    const auto x = retained_values(tr, U, 0.2);
    const auto edges = data_edges(x, cfg.bins);
    std::vector<double> xx = x;
    xx.insert(xx.end(), x.begin(), x.end());
    const auto a = histogram(x, edges), b = histogram(xx, edges);
    double worst = 0.0;
    for (std::size_t i = 0; i < a.masses.size(); ++i) worst = std::max(worst, std::abs(a.masses[i] - b.masses[i]));
    return worst;
  });
  return out;
}

}  // namespace sburgers
