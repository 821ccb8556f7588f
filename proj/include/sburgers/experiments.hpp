#pragma once

// Subcommand orchestration: each run writes its CSV/JSON outputs and a manifest into one
// directory and returns the process exit status.

#include <cmath>
#include <filesystem>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "sburgers/config.hpp"
#include "sburgers/decomposition.hpp"
#include "sburgers/dynamics.hpp"
#include "sburgers/ergodicity.hpp"
#include "sburgers/io.hpp"
#include "sburgers/verify.hpp"

namespace sburgers {

enum ExitStatus : int {
  exit_ok = 0,
  exit_check_failed = 1,  // an invariant or bound was violated
  exit_blow_up = 2,
  exit_config = 3,
  exit_runtime = 4,
};

// Stream layout per (seed): ensembles use streams [0, n) (and [n, 2n) for an independent
// second ensemble); single long runs and auxiliary draws live far above.
inline constexpr std::uint64_t occupation_stream = std::uint64_t{1} << 32;
inline constexpr std::uint64_t lemma1_stream = std::uint64_t{1} << 33;
inline constexpr std::uint64_t bootstrap_stream = std::uint64_t{1} << 34;

inline const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names{"simulate", "invariant", "verify", "lemma-scan", "converge"};
  return names;
}

namespace detail {

inline double nan() { return std::numeric_limits<double>::quiet_NaN(); }

// Coercivity constant beta = rate_1 / (2 pi^2): nu/2 in the physical convention.
inline double energy_beta(const ModelParams& p) { return 0.5 * p.spectrum().decay_rate(1) / (pi * pi); }

inline int run_simulate(const RunConfig& cfg, RunManifest& m) {
  const ModelParams& p = cfg.model;
  const State init = cfg.initial.state(p.K);
  const std::size_t steps = step_count(cfg.T, p.dt);
  m.seeds(cfg.seed, 0, 1, "trajectory");

  std::vector<std::string> header{"t", "U", "l2norm", "h14norm"};
  const std::size_t modes = std::min(cfg.output_modes, p.K);
  for (std::size_t k = 1; k <= modes; ++k) header.push_back("mode_" + std::to_string(k));
  CsvWriter traj(m.path("trajectory.csv"), header);
  std::vector<double> row(header.size());
  auto write_row = [&](double t, const State& s) {
    row[0] = t;
    row[1] = s.U;
    row[2] = s.v.norm();
    row[3] = norm_fractional(s.v, 0.125);
    for (std::size_t k = 1; k <= modes; ++k) row[3 + k] = s.v[k - 1];
    traj.row(row);
  };

  std::optional<IncrementDump> dump;
  if (cfg.dump_increments) dump.emplace(m.path("increments.bin"), p.K, steps, p.dt);

  const AuxStepper aux_stepper(p, cfg.ledger_L);
  AuxState aux = AuxState::start(init, cfg.ledger_L);
  EnergyLedger ledger{energy_record(aux, 0.0, cfg.xi_exponent)};
  const std::size_t N = p.grid();

  SimulateOptions so;
  so.store_states = false;
  so.record_every = std::numeric_limits<std::size_t>::max();
  so.on_step = [&](std::size_t n, const State& s, const NoiseIncrement& inc, const State& next) {
    if (dump) dump->write(inc);
    aux = aux_stepper.advance(aux, project_noise(eval_g1(p.g1, s, N), inc.dW), eval_g0(p.g0, s), inc, next);
    ledger.push_back(energy_record(aux, static_cast<double>(n) * p.dt, cfg.xi_exponent));
    if (n % cfg.record_every == 0 || n == steps) write_row(static_cast<double>(n) * p.dt, next);
  };

  write_row(0.0, init);
  std::optional<BlowUpError> blow_up;
  try {
    simulate(p, init, cfg.T, {cfg.seed, 0}, so);
  } catch (const BlowUpError& e) {
    blow_up = e;
  }
  traj.close();
  m.add_file("trajectory.csv");
  if (dump) {
    dump->close();
    m.add_file("increments.bin");
  }

  // Energy ledger at the trajectory sampling; residual r_n needs record n + 1.
  const double beta = energy_beta(p);
  std::optional<EnergyFit> fit;
  std::vector<double> residual;
  if (ledger.size() >= 2 && !blow_up) {
    try {
      fit = fit_energy_constant(ledger, p.dt, beta);
      residual = energy_residual(ledger, p.dt, beta, fit->C);
    } catch (const DomainError&) {
    }
  }
  CsvWriter energy(m.path("energy.csv"), {"t", "y", "xi", "eta", "h10", "residual"});
  for (std::size_t n = 0; n < ledger.size(); ++n) {
    if (n % cfg.record_every != 0 && n + 1 != ledger.size()) continue;
    const auto& e = ledger[n];
    energy.row({e.t, e.y, e.xi, e.eta, e.h10, n < residual.size() ? residual[n] : nan()});
  }
  energy.close();
  m.add_file("energy.csv");

  auto& sum = m.summary();
  sum["steps"] = steps;
  sum["ledger_L"] = cfg.ledger_L;
  sum["energy_beta"] = beta;
  sum["energy_C"] = fit ? json(fit->C) : json(nullptr);
  sum["energy_C_exact"] = fit ? json(fit->C_exact) : json(nullptr);
  if (blow_up) throw *blow_up;
  return exit_ok;
}

inline int run_invariant(const RunConfig& cfg, RunManifest& m) {
  const ModelParams& p = cfg.model;
  const double burn = cfg.burn_in_value();
  m.seeds(cfg.seed, 0, 1, "trajectory");
  SimulateOptions so;
  so.record_every = cfg.record_every;
  const auto tr = simulate(p, cfg.initial.state(p.K), cfg.T, {cfg.seed, 0}, so);

  auto& sum = m.summary();
  sum["burn_in"] = burn;
  sum["retained_samples"] = retained_values(tr, ObservableSpec{}, burn).size();
  for (const auto& obs : cfg.observables) {
    const auto x = retained_values(tr, obs, burn);
    const auto mu = occupation_measure(tr, obs, data_edges(x, cfg.bins), burn);
    const std::string name = "hist_" + obs.name() + ".csv";
    CsvWriter w(m.path(name), {"edge_lo", "edge_hi", "mass"});
    const double inf = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < mu.masses.size(); ++i) {
      const double lo = i == 0 ? -inf : mu.edges[i - 1];
      const double hi = i == mu.masses.size() - 1 ? inf : mu.edges[i];
      w.row({lo, hi, mu.masses[i]});
    }
    w.close();
    m.add_file(name);
  }

  CsvWriter tail(m.path("tail.csv"), {"M", "tail_fraction"});
  std::optional<double> M_star;
  bool nonincreasing = true;
  double prev = 1.0;
  for (double M : cfg.M_grid) {
    const double f = tail_fraction(tr, M, burn);
    tail.row({M, f});
    nonincreasing = nonincreasing && f <= prev;
    prev = f;
    if (!M_star && f < 0.05) M_star = M;
  }
  tail.close();
  m.add_file("tail.csv");
  sum["tail_nonincreasing"] = nonincreasing;
  sum["M_star"] = M_star ? json(*M_star) : json(nullptr);
  return exit_ok;
}

inline int run_verify(const RunConfig& cfg, RunManifest& m) {
  const auto results = run_invariant_suite(cfg);
  CsvWriter w(m.path("verify.csv"), {"module", "name", "measured", "relation", "tolerance", "passed"});
  json list = json::array();
  std::size_t failed = 0;
  for (const auto& r : results) {
    w.row_strings({r.module, r.name, format_double(r.measured), r.relation, format_double(r.tolerance),
                   r.passed ? "true" : "false"});
    json j{{"module", r.module},     {"name", r.name},         {"measured", r.measured},
           {"relation", r.relation}, {"tolerance", r.tolerance}, {"passed", r.passed}};
    if (!r.error.empty()) j["error"] = r.error;
    list.push_back(std::move(j));
    if (!r.passed) ++failed;
  }
  w.close();
  write_json(m.path("verify.json"), {{"checks", list}, {"failed", failed}});
  m.add_file("verify.csv");
  m.add_file("verify.json");
  m.summary()["checks"] = results.size();
  m.summary()["failed"] = failed;
  return failed == 0 ? exit_ok : exit_check_failed;
}

// Alternates Gaussian node values with narrow spikes, which come close to the bound.
inline GridField lemma1_field(Generator& g, std::size_t N, std::size_t i) {
  GridField psi(N);
  if (i % 2 == 0) {
    for (double& x : psi.values()) x = g.normal();
  } else {
    const auto j = std::min(N, static_cast<std::size_t>(g.uniform() * static_cast<double>(N + 1)));
    psi[j] = g.normal();
  }
  return psi;
}

inline int run_lemma_scan(const RunConfig& cfg, RunManifest& m) {
  const ModelParams& p = cfg.model;
  m.seeds(cfg.seed, 0, cfg.paths, "moment_paths");
  MomentScanOptions mo;
  mo.sample_every = cfg.moment_sample_every;
  mo.threads = cfg.threads;
  mo.init = cfg.initial.state(p.K);
  const auto rows = moment_scan(p, cfg.L_values, cfg.moment_order, cfg.T, cfg.paths, {cfg.seed, 0}, mo);
  CsvWriter w(m.path("moments.csv"), {"L", "estimate", "stderr", "t_max"});
  for (const auto& r : rows) w.row({r.L, r.estimate, r.stderr_, r.t_max});
  w.close();
  m.add_file("moments.csv");
  bool decreasing = true;
  for (std::size_t i = 1; i < rows.size(); ++i)
    decreasing = decreasing && rows[i].estimate < rows[i - 1].estimate + 2.0 * std::hypot(rows[i].stderr_, rows[i - 1].stderr_);
  auto& sum = m.summary();
  sum["moments_decreasing_2se"] = decreasing;
  sum["moment_ratio_last_first"] = rows.front().estimate > 0.0 ? json(rows.back().estimate / rows.front().estimate)
                                                                 : json(nullptr);

  // Lemma 1 bound: ||S(t) psi'|| <= C t^{-1/2} ||psi||_{L1}.
  m.seeds(cfg.seed, lemma1_stream, 1, "lemma1_fields");
  const auto spec = p.spectrum();
  const double C = derivative_semigroup_constant(cfg.lemma1_times, spec);
  const std::size_t N = p.grid();
  Generator gen({cfg.seed, lemma1_stream});
  std::vector<GridField> fields;
  for (std::size_t i = 0; i < cfg.lemma1_fields; ++i) fields.push_back(lemma1_field(gen, N, i));
  CsvWriter l1(m.path("lemma1.csv"), {"t", "bound_constant", "max_ratio", "violations"});
  std::size_t total = 0;
  for (double t : cfg.lemma1_times) {
    const double bound = C / std::sqrt(t);
    double worst = 0.0;
    std::size_t bad = 0;
    for (const auto& psi : fields) {
      const double l1n = norm_l1(psi);
      if (l1n == 0.0) continue;
      const double ratio = semigroup_of_derivative(psi, t, spec, p.K).norm() / l1n;
      worst = std::max(worst, ratio);
      if (ratio > (1.0 + derivative_bound_roundoff) * bound) ++bad;
    }
    l1.row({t, bound, worst, static_cast<double>(bad)});
    total += bad;
  }
  l1.close();
  m.add_file("lemma1.csv");
  sum["lemma1_C"] = C;
  sum["lemma1_violations"] = total;
  return total == 0 ? exit_ok : exit_check_failed;
}

inline int run_converge(const RunConfig& cfg, RunManifest& m) {
  const ModelParams& p = cfg.model;
  const State z1 = cfg.initial.state(p.K), z2 = cfg.initial2.state(p.K);
  const ObservableSpec& obs = cfg.converge_observable;
  auto& sum = m.summary();

  const bool indep = cfg.coupling == PathCoupling::independent;
  m.seeds(cfg.seed, 0, indep ? 2 * cfg.paths : cfg.paths, "ensemble_paths");
  const auto res = ergodic_convergence(p, z1, z2, cfg.t_grid, obs, cfg.bins, cfg.paths, {cfg.seed, 0}, cfg.coupling,
                                       cfg.threads);
  CsvWriter tv(m.path("tv.csv"), {"t", "tv_distance", "bootstrap_floor95", "paths_used_1", "paths_used_2"});
  bool decreasing = true;
  for (std::size_t j = 0; j < res.rows.size(); ++j) {
    const auto& row = res.rows[j];
    std::vector<double> pooled = res.samples1[j];
    pooled.insert(pooled.end(), res.samples2[j].begin(), res.samples2[j].end());
    const double floor = bootstrap_tv_floor(pooled, res.samples1[j].size(), row.law1.edges, 200, 0.95,
                                            {cfg.seed, bootstrap_stream + j});
    tv.row({row.t, row.tv, floor, static_cast<double>(res.samples1[j].size()),
            static_cast<double>(res.samples2[j].size())});
    if (j > 0) decreasing = decreasing && row.tv < res.rows[j - 1].tv;
  }
  tv.close();
  m.add_file("tv.csv");
  sum["tv_decreasing"] = decreasing;
  sum["excluded_paths"] = res.excluded;

  // Occupation measures of two long runs with independent noise, compared over prefixes.
  m.seeds(cfg.seed, occupation_stream, 2, "occupation_runs");
  const double burn = cfg.burn_in_value();
  SimulateOptions so;
  so.store_states = false;
  so.record_every = cfg.record_every;
  so.observers = {{obs.name(), obs}};
  const auto a = simulate(p, z1, cfg.T, {cfg.seed, occupation_stream}, so);
  const auto b = simulate(p, z2, cfg.T, {cfg.seed, occupation_stream + 1}, so);
  auto window = [&](const Trajectory& tr, double upto) {
    std::vector<double> x;
    for (std::size_t i = 0; i < tr.times.size(); ++i)
      if (tr.times[i] > burn && tr.times[i] <= upto) x.push_back(tr.observations[0][i]);
    return x;
  };
  std::vector<double> pooled = window(a, cfg.T);
  {
    const auto xb = window(b, cfg.T);
    pooled.insert(pooled.end(), xb.begin(), xb.end());
  }
  if (pooled.empty()) throw DomainError("converge: T must exceed the burn-in");
  const auto edges = data_edges(pooled, cfg.bins);
  CsvWriter occ(m.path("occupation.csv"), {"T", "tv_distance"});
  double last = nan();
  for (int i = 1; i <= 10; ++i) {
    const double upto = burn + (cfg.T - burn) * i / 10.0;
    const auto xa = window(a, upto), xb = window(b, upto);
    if (xa.empty() || xb.empty()) continue;
    last = tv_distance(histogram(xa, edges), histogram(xb, edges));
    occ.row({upto, last});
  }
  occ.close();
  m.add_file("occupation.csv");
  sum["occupation_tv"] = last;
  return exit_ok;
}

}  // namespace detail

/// Runs one subcommand into cfg.output_dir.  Blow-ups and other runtime failures are
/// reported in error.json; the manifest is written in every case once the directory exists.
inline int run_subcommand(const std::string& cmd, const RunConfig& cfg, std::ostream& log = std::cerr) {
  namespace fs = std::filesystem;
  const fs::path dir = cfg.output_dir.empty() ? fs::path("out") : fs::path(cfg.output_dir);
  fs::create_directories(dir);
  RunManifest m(dir, cmd, cfg);
  int status = exit_ok;
  auto fail = [&](int code, json err) {
    write_json(m.path("error.json"), err);
    m.add_file("error.json");
    log << "sburgers " << cmd << ": " << err["message"].get<std::string>() << '\n';
    return code;
  };
  try {
    if (cmd == "simulate")
      status = detail::run_simulate(cfg, m);
    else if (cmd == "invariant")
      status = detail::run_invariant(cfg, m);
    else if (cmd == "verify")
      status = detail::run_verify(cfg, m);
    else if (cmd == "lemma-scan")
      status = detail::run_lemma_scan(cfg, m);
    else if (cmd == "converge")
      status = detail::run_converge(cfg, m);
    else
      throw ConfigError("", "unknown subcommand '" + cmd + "'");
  } catch (const BlowUpError& e) {
    status = fail(exit_blow_up, {{"error", "blow_up"}, {"message", e.what()}, {"step", e.step()}, {"time", e.time()}});
  } catch (const ConfigError& e) {
    status = fail(exit_config, {{"error", "config"}, {"key", e.key()}, {"message", e.what()}});
  } catch (const std::exception& e) {
    status = fail(exit_runtime, {{"error", "runtime"}, {"message", e.what()}});
  }
  m.write(status);
  return status;
}

}  // namespace sburgers
