#pragma once

// Occupation measures, tail fractions and total-variation distances of scalar
// observables, plus Monte Carlo transition expectations P_t f(z) = E f(X^z(t)).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sburgers/dynamics.hpp"
#include "sburgers/errors.hpp"
#include "sburgers/noise.hpp"
#include "sburgers/parallel.hpp"
#include "sburgers/spectral.hpp"

namespace sburgers {

struct ObservableSpec {
  enum class Kind {
    U,
    l2norm_v,   // ||v||
    h14norm_v,  // ||v||_{H^{1/4}}
    mode_k,     // coefficient of e_k
    hnorm,      // |U| + ||v||
    h0norm,     // |U| + ||v||_{H^{1/4}}
  };
  Kind kind = Kind::U;
  std::size_t k = 1;

  double operator()(const State& s) const {
    switch (kind) {
      case Kind::U:
        return s.U;
      case Kind::l2norm_v:
        return s.v.norm();
      case Kind::h14norm_v:
        return norm_fractional(s.v, 0.125);
      case Kind::mode_k:
        return k >= 1 && k <= s.v.modes() ? s.v[k - 1] : 0.0;
      case Kind::hnorm:
        return std::abs(s.U) + s.v.norm();
      case Kind::h0norm:
        return std::abs(s.U) + norm_fractional(s.v, 0.125);
    }
    return 0.0;
  }

  std::string name() const {
    switch (kind) {
      case Kind::U:
        return "U";
      case Kind::l2norm_v:
        return "l2norm_v";
      case Kind::h14norm_v:
        return "h14norm_v";
      case Kind::mode_k:
        return "mode_" + std::to_string(k);
      case Kind::hnorm:
        return "hnorm";
      case Kind::h0norm:
        return "h0norm";
    }
    return "";
  }

  /// Inverse of name(); throws ConfigError on unknown names.
  static ObservableSpec parse(const std::string& s) {
    if (s == "U") return {Kind::U};
    if (s == "l2norm_v") return {Kind::l2norm_v};
    if (s == "h14norm_v") return {Kind::h14norm_v};
    if (s == "hnorm") return {Kind::hnorm};
    if (s == "h0norm") return {Kind::h0norm};
    if (s.rfind("mode_", 0) == 0) {
      std::size_t pos = 0;
      unsigned long k = 0;
      try {
        k = std::stoul(s.substr(5), &pos);
      } catch (const std::exception&) {
        pos = 0;
      }
      if (pos == s.size() - 5 && pos > 0 && k >= 1) return {Kind::mode_k, static_cast<std::size_t>(k)};
    }
    throw ConfigError("observables", "unknown observable '" + s + "'");
  }
};

/// Histogram over fixed edges e_0 < ... < e_B with an underflow bin (-inf, e_0) first and
/// an overflow bin [e_B, inf) last; interior bin i covers [e_i, e_{i+1}).
struct EmpiricalMeasure {
  std::vector<double> edges;
  std::vector<double> masses;  // edges.size() + 1 entries summing to 1
  std::size_t samples = 0;

  std::size_t bins() const noexcept { return edges.empty() ? 0 : edges.size() - 1; }
};

inline std::vector<double> uniform_edges(double lo, double hi, std::size_t bins) {
  if (bins == 0 || !(hi > lo) || !std::isfinite(lo) || !std::isfinite(hi))
    throw DomainError("uniform_edges: need bins >= 1 and finite lo < hi");
  std::vector<double> e(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i)
    e[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins);
  e.back() = hi;
  return e;
}

/// Edges spanning [min, max] of the samples, widened by 1e-9 of the span (or +-0.5 for a
/// degenerate sample) so every sample falls in an interior bin.
inline std::vector<double> data_edges(std::span<const double> samples, std::size_t bins) {
  if (samples.empty()) throw DomainError("data_edges: no samples");
  const auto [mn, mx] = std::minmax_element(samples.begin(), samples.end());
  double lo = *mn, hi = *mx;
  if (hi - lo <= 0.0) {
    lo -= 0.5;
    hi += 0.5;
  } else {
    const double pad = 1e-9 * (hi - lo);
    lo -= pad;
    hi += pad;
  }
  return uniform_edges(lo, hi, bins);
}

inline EmpiricalMeasure histogram(std::span<const double> samples, std::vector<double> edges) {
  if (edges.size() < 2) throw DomainError("histogram: need at least 2 edges");
  for (std::size_t i = 1; i < edges.size(); ++i)
    if (!(edges[i] > edges[i - 1])) throw DomainError("histogram: edges must be strictly increasing");
  if (samples.empty()) throw DomainError("histogram: no samples");
  EmpiricalMeasure m;
  m.edges = std::move(edges);
  std::vector<std::size_t> counts(m.edges.size() + 1, 0);
  for (double x : samples) {
    const auto it = std::upper_bound(m.edges.begin(), m.edges.end(), x);
    ++counts[static_cast<std::size_t>(it - m.edges.begin())];
  }
  m.samples = samples.size();
  m.masses.resize(counts.size());
  const double n = static_cast<double>(samples.size());
  for (std::size_t i = 0; i < counts.size(); ++i) m.masses[i] = static_cast<double>(counts[i]) / n;
  return m;
}

/// Values of `obs` at the stored samples with t > burn_in.
inline std::vector<double> retained_values(const Trajectory& tr, const ObservableSpec& obs, double burn_in) {
  if (tr.states.size() != tr.times.size()) throw SizeError("trajectory has no stored states");
  std::vector<double> x;
  for (std::size_t i = 0; i < tr.times.size(); ++i)
    if (tr.times[i] > burn_in) x.push_back(obs(tr.states[i]));
  return x;
}

/// Krylov-Bogolyubov time average of the law of obs(X(s)) over s in (burn_in, T].
inline EmpiricalMeasure occupation_measure(const Trajectory& tr, const ObservableSpec& obs,
                                           std::vector<double> edges, double burn_in) {
  if (!(tr.horizon() > burn_in)) throw DomainError("occupation_measure: horizon must exceed burn-in");
  const auto x = retained_values(tr, obs, burn_in);
  if (x.empty()) throw DomainError("occupation_measure: empty retained window");
  return histogram(x, std::move(edges));
}

/// Fraction of retained samples with obs(X) >= M; obs defaults to |U| + ||v||.
inline double tail_fraction(const Trajectory& tr, double M, double burn_in,
                            const ObservableSpec& obs = {ObservableSpec::Kind::hnorm}) {
  if (!(M > 0.0)) throw DomainError("tail_fraction: M must be > 0");
  const auto x = retained_values(tr, obs, burn_in);
  if (x.empty()) throw DomainError("tail_fraction: empty retained window");
  const auto above = std::count_if(x.begin(), x.end(), [M](double v) { return v >= M; });
  return static_cast<double>(above) / static_cast<double>(x.size());
}

/// 1/2 sum |p_i - q_i|, the total variation distance on the binned sigma-algebra.
inline double tv_distance(const EmpiricalMeasure& a, const EmpiricalMeasure& b) {
  if (a.edges != b.edges) throw DomainError("tv_distance: measures have different bin edges");
  double s = 0.0;
  for (std::size_t i = 0; i < a.masses.size(); ++i) s += std::abs(a.masses[i] - b.masses[i]);
  return std::min(1.0, 0.5 * s);
}

struct PathSup {
  double U = 0.0;  // sup_t |U(t)|
  double v = 0.0;  // sup_t ||v(t)||
};

/// Inner suprema of the Z^p_T norms over the stored samples.
inline PathSup path_sup_norm(const Trajectory& tr, double p_exp) {
  if (!(p_exp >= 1.0)) throw DomainError("path_sup_norm: order must be >= 1");
  PathSup r;
  for (const auto& s : tr.states) {
    r.U = std::max(r.U, std::abs(s.U));
    r.v = std::max(r.v, s.v.norm());
  }
  return r;
}

/// (E sup^p)^{1/p} from per-path suprema.
inline double ensemble_path_norm(std::span<const double> sups, double p_exp) {
  if (sups.empty() || !(p_exp >= 1.0)) throw DomainError("ensemble_path_norm: need samples and p >= 1");
  double s = 0.0;
  for (double x : sups) s += std::pow(x, p_exp);
  return std::pow(s / static_cast<double>(sups.size()), 1.0 / p_exp);
}

/// Sample mean and its standard error (two-pass).  Identical samples give (x, 0) exactly.
inline std::pair<double, double> mean_and_stderr(std::span<const double> x) {
  if (x.empty()) throw DomainError("mean_and_stderr: no samples");
  if (std::all_of(x.begin(), x.end(), [&](double v) { return v == x.front(); })) return {x.front(), 0.0};
  const double n = static_cast<double>(x.size());
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= n;
  if (x.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / (n - 1.0) / n)};
}

struct TransitionEstimate {
  double estimate = 0.0;
  double stderr_ = 0.0;
  std::size_t used = 0;
  std::size_t excluded = 0;  // paths that blew up
};

/// Monte Carlo P_t f(z) over n_paths paths; path i uses stream seed.stream_id + i.
inline TransitionEstimate transition_expectation(const ModelParams& p, const State& z,
                                                 const std::function<double(const State&)>& f, double t,
                                                 std::size_t n_paths, RngSeed seed, std::size_t threads = 1) {
  if (n_paths < 2) throw DomainError("transition_expectation: need at least 2 paths");
  std::vector<std::optional<double>> vals(n_paths);
  SimulateOptions so;
  so.record_every = std::numeric_limits<std::size_t>::max();
  parallel_for(n_paths, threads, [&](std::size_t i) {
    try {
      const auto tr = simulate(p, z, t, {seed.seed, seed.stream_id + i}, so);
      vals[i] = f(tr.states.back());
    } catch (const BlowUpError&) {
      vals[i].reset();
    }
  });
  TransitionEstimate r;
  std::vector<double> ok;
  for (const auto& v : vals) {
    if (v)
      ok.push_back(*v);
    else
      ++r.excluded;
  }
  r.used = ok.size();
  if (ok.empty()) return r;
  const auto [mean, se] = mean_and_stderr(ok);
  r.estimate = mean;
  r.stderr_ = se;
  return r;
}

struct ConvergenceRow {
  double t = 0.0;
  EmpiricalMeasure law1;
  EmpiricalMeasure law2;
  double tv = 0.0;
};

struct ConvergenceResult {
  std::vector<ConvergenceRow> rows;
  std::size_t excluded = 0;
  /// Per-path values: samples1[t_index][path] (blown-up paths omitted).
  std::vector<std::vector<double>> samples1, samples2;
};

enum class PathCoupling {
  /// Path i from z1 and path i from z2 share the stream seed.stream_id + i.
  common_noise,
  /// z2 paths use streams seed.stream_id + n_paths + i.
  independent,
};

/// Time-t laws of obs(X^{z1}(t)) and obs(X^{z2}(t)) for t in t_grid and their TV distance.
/// Bins at each t span the pooled samples of both ensembles at that t.
inline ConvergenceResult ergodic_convergence(const ModelParams& p, const State& z1, const State& z2,
                                             std::span<const double> t_grid, const ObservableSpec& obs,
                                             std::size_t bins, std::size_t n_paths, RngSeed seed,
                                             PathCoupling coupling = PathCoupling::common_noise,
                                             std::size_t threads = 1) {
  if (n_paths < 2) throw DomainError("ergodic_convergence: need at least 2 paths");
  if (t_grid.empty()) throw DomainError("ergodic_convergence: empty time grid");
  for (std::size_t i = 0; i < t_grid.size(); ++i)
    if (!(t_grid[i] >= 0.0) || (i > 0 && !(t_grid[i] > t_grid[i - 1])))
      throw DomainError("ergodic_convergence: time grid must be nonnegative and increasing");
  const std::size_t nt = t_grid.size();
  std::vector<std::size_t> record_steps;
  for (double t : t_grid) record_steps.push_back(step_count(t, p.dt));

  // per path: values at each t, or nullopt on blow-up
  using PathValues = std::optional<std::vector<double>>;
  auto run = [&](const State& z, std::uint64_t stream) -> PathValues {
    std::vector<double> out(nt, 0.0);
    std::size_t next = 0;
    while (next < nt && record_steps[next] == 0) out[next++] = obs(z);
    SimulateOptions so;
    so.store_states = false;
    so.record_every = std::numeric_limits<std::size_t>::max();
    so.on_step = [&](std::size_t n, const State&, const NoiseIncrement&, const State& s) {
      while (next < nt && record_steps[next] == n) out[next++] = obs(s);
    };
    try {
      simulate(p, z, t_grid.back(), {seed.seed, stream}, so);
    } catch (const BlowUpError&) {
      return std::nullopt;
    }
    return out;
  };

  std::vector<PathValues> a(n_paths), b(n_paths);
  parallel_for(n_paths, threads, [&](std::size_t i) {
    a[i] = run(z1, seed.stream_id + i);
    b[i] = run(z2, seed.stream_id + i + (coupling == PathCoupling::independent ? n_paths : 0));
  });

  ConvergenceResult res;
  res.samples1.assign(nt, {});
  res.samples2.assign(nt, {});
  for (std::size_t i = 0; i < n_paths; ++i) {
    if (a[i]) {
      for (std::size_t j = 0; j < nt; ++j) res.samples1[j].push_back((*a[i])[j]);
    } else {
      ++res.excluded;
    }
    if (b[i]) {
      for (std::size_t j = 0; j < nt; ++j) res.samples2[j].push_back((*b[i])[j]);
    } else {
      ++res.excluded;
    }
  }
  for (std::size_t j = 0; j < nt; ++j) {
    if (res.samples1[j].empty() || res.samples2[j].empty())
      throw DomainError("ergodic_convergence: every path blew up");
    std::vector<double> pooled = res.samples1[j];
    pooled.insert(pooled.end(), res.samples2[j].begin(), res.samples2[j].end());
    const auto edges = data_edges(pooled, bins);
    ConvergenceRow row;
    row.t = t_grid[j];
    row.law1 = histogram(res.samples1[j], edges);
    row.law2 = histogram(res.samples2[j], edges);
    row.tv = tv_distance(row.law1, row.law2);
    res.rows.push_back(std::move(row));
  }
  return res;
}

/// Bootstrap estimate of the TV distance between two independent size-n samples of the
/// same law: resample both from `pooled`, histogram on `edges`, return the q-quantile.
inline double bootstrap_tv_floor(std::span<const double> pooled, std::size_t n, const std::vector<double>& edges,
                                 std::size_t replicates, double q, RngSeed seed) {
  if (pooled.empty() || n == 0 || replicates == 0) throw DomainError("bootstrap_tv_floor: empty input");
  Generator gen(seed);
  std::vector<double> tvs, x(n), y(n);
  auto draw = [&](std::vector<double>& out) {
    for (double& v : out) {
      const auto idx = static_cast<std::size_t>(gen.uniform() * static_cast<double>(pooled.size()));
      v = pooled[std::min(idx, pooled.size() - 1)];
    }
  };
  for (std::size_t r = 0; r < replicates; ++r) {
    draw(x);
    draw(y);
    tvs.push_back(tv_distance(histogram(x, edges), histogram(y, edges)));
  }
  std::sort(tvs.begin(), tvs.end());
  const auto idx = static_cast<std::size_t>(std::ceil(q * static_cast<double>(replicates))) ;
  return tvs[std::min(idx == 0 ? 0 : idx - 1, tvs.size() - 1)];
}

}  // namespace sburgers
