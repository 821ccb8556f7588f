#pragma once

// Coupled system
//   dU = (P - nu U - ||v||^2) dt + g0(U, v) dW0
//   dv = (nu v_xx + U v - (v^2)_x) dt + g1(U, v) dW1
// advanced by an exponential (integrating-factor) Euler scheme in mild form.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sburgers/errors.hpp"
#include "sburgers/noise.hpp"
#include "sburgers/spectral.hpp"

namespace sburgers {

/// X = (U, v) in H = R x L2.
struct State {
  double U = 0.0;
  SpectralField v;

  static State zero(std::size_t modes) { return {0.0, SpectralField(modes)}; }

  /// ||X||_H = (U^2 + ||v||^2)^{1/2}.
  double h_norm() const { return std::sqrt(U * U + v.norm2()); }
  bool all_finite() const { return std::isfinite(U) && v.all_finite(); }

  friend bool operator==(const State&, const State&) = default;
};

/// Bounded Lipschitz diffusion coefficient.
///
/// constant:        g = value.
/// clamped_affine:  g = clamp(offset + slope_U U + slope_norm ||v|| [+ slope_v v(x) for g1], lower, upper);
///                  Lipschitz constant |slope_U| + |slope_norm| + |slope_v|.
/// tabulated:       piecewise-linear in U or ||v|| through (x_i, y_i); arguments outside
///                  [x_0, x_n] use the end values; then clamped to [lower, upper].
struct DiffusionSpec {
  enum class Kind { constant, clamped_affine, tabulated };
  enum class Argument { U, l2norm };

  Kind kind = Kind::constant;
  double value = 0.0;

  double offset = 0.0;
  double slope_U = 0.0;
  double slope_norm = 0.0;
  double slope_v = 0.0;

  Argument argument = Argument::U;
  std::vector<double> x;
  std::vector<double> y;

  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();

  static DiffusionSpec constant(double c) {
    DiffusionSpec s;
    s.value = c;
    s.lower = s.upper = c;
    return s;
  }

  static DiffusionSpec clamped_affine(double offset, double slope_U, double slope_norm, double slope_v,
                                      double lower, double upper) {
    DiffusionSpec s;
    s.kind = Kind::clamped_affine;
    s.offset = offset;
    s.slope_U = slope_U;
    s.slope_norm = slope_norm;
    s.slope_v = slope_v;
    s.lower = lower;
    s.upper = upper;
    s.validate();
    return s;
  }

  static DiffusionSpec tabulated(Argument arg, std::vector<double> xs, std::vector<double> ys) {
    DiffusionSpec s;
    s.kind = Kind::tabulated;
    s.argument = arg;
    s.x = std::move(xs);
    s.y = std::move(ys);
    if (!s.y.empty()) {
      s.lower = *std::min_element(s.y.begin(), s.y.end());
      s.upper = *std::max_element(s.y.begin(), s.y.end());
    }
    s.validate();
    return s;
  }

  void validate() const {
    if (!std::isfinite(lower) || !std::isfinite(upper) || lower > upper)
      throw ConfigError("bounds", "diffusion bounds must be finite with lower <= upper");
    switch (kind) {
      case Kind::constant:
        if (!std::isfinite(value)) throw ConfigError("value", "must be finite");
        break;
      case Kind::clamped_affine:
        for (double c : {offset, slope_U, slope_norm, slope_v})
          if (!std::isfinite(c)) throw ConfigError("slope", "affine parameters must be finite");
        break;
      case Kind::tabulated:
        if (x.size() < 2 || x.size() != y.size())
          throw ConfigError("table", "need >= 2 points and matching x/y lengths");
        for (std::size_t i = 1; i < x.size(); ++i)
          if (!(x[i] > x[i - 1])) throw ConfigError("table", "x must be strictly increasing");
        break;
    }
  }

  double bound() const { return std::max(std::abs(lower), std::abs(upper)); }
  bool separated_from_zero() const { return lower > 0.0 || upper < 0.0; }
  bool spatially_uniform() const { return kind != Kind::clamped_affine || slope_v == 0.0; }

  double lipschitz_constant() const {
    switch (kind) {
      case Kind::constant:
        return 0.0;
      case Kind::clamped_affine:
        return std::abs(slope_U) + std::abs(slope_norm) + std::abs(slope_v);
      case Kind::tabulated: {
        double m = 0.0;
        for (std::size_t i = 1; i < x.size(); ++i) m = std::max(m, std::abs((y[i] - y[i - 1]) / (x[i] - x[i - 1])));
        return m;
      }
    }
    return 0.0;
  }

  /// Spatially constant part of the coefficient at state s.
  double scalar_part(double U, double vnorm) const {
    switch (kind) {
      case Kind::constant:
        return value;
      case Kind::clamped_affine:
        return offset + slope_U * U + slope_norm * vnorm;
      case Kind::tabulated: {
        const double a = argument == Argument::U ? U : vnorm;
        if (a <= x.front()) return y.front();
        if (a >= x.back()) return y.back();
        const auto it = std::upper_bound(x.begin(), x.end(), a);
        const std::size_t i = static_cast<std::size_t>(it - x.begin());
        const double w = (a - x[i - 1]) / (x[i] - x[i - 1]);
        return y[i - 1] + w * (y[i] - y[i - 1]);
      }
    }
    return 0.0;
  }

  double clamp(double g) const { return std::clamp(g, lower, upper); }
};

inline double eval_g0(const DiffusionSpec& spec, const State& s) {
  return spec.clamp(spec.scalar_part(s.U, s.v.norm()));
}

/// Pointwise multiplier g1(U, v)(x_j) on the grid with `intervals` cells.
inline GridField eval_g1(const DiffusionSpec& spec, const State& s, std::size_t intervals) {
  const double base = spec.scalar_part(s.U, s.v.norm());
  if (spec.spatially_uniform()) return GridField::constant(intervals, spec.clamp(base));
  GridField g = to_grid(s.v, intervals);
  for (double& gx : g.values()) gx = spec.clamp(base + spec.slope_v * gx);
  return g;
}

/// C^1 monotone cutoff: 1 on [0, n], 0 on [n+1, inf), smoothstep in between (|phi'| <= 3/2).
inline double phi_n(double r, double n) {
  if (!(r >= 0.0)) throw DomainError("phi_n: r must be >= 0");
  if (!(n >= 1.0)) throw DomainError("phi_n: level n must be >= 1");
  if (r <= n) return 1.0;
  if (r >= n + 1.0) return 0.0;
  const double s = r - n;
  return 1.0 - s * s * (3.0 - 2.0 * s);
}

struct ModelParams {
  double P = 1.0;
  double nu = 1.0;
  NuConvention nu_convention = NuConvention::physical;
  DiffusionSpec g0 = DiffusionSpec::constant(0.1);
  DiffusionSpec g1 = DiffusionSpec::constant(0.1);
  std::size_t K = 64;
  std::size_t N = 0;  // 0: dealiased_grid_size(K)
  double dt = 1e-3;
  std::optional<double> cutoff;
  NoiseScheme noise_scheme = NoiseScheme::exact_variance;
  /// false drops U v, (v^2)_x and ||v||^2 from the drifts, leaving two decoupled linear equations.
  bool nonlinear = true;
  /// Require g0, g1 bounded away from zero.
  bool separated_from_zero = false;

  OperatorSpectrum spectrum() const { return {nu, nu_convention}; }
  std::size_t grid() const { return N == 0 ? dealiased_grid_size(K) : N; }

  void validate() const {
    if (!(nu > 0.0) || !std::isfinite(nu)) throw ConfigError("nu", "must be > 0");
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("dt", "must be > 0");
    if (!std::isfinite(P)) throw ConfigError("P", "must be finite");
    if (K == 0) throw ConfigError("K", "must be >= 1");
    const std::size_t n = grid();
    if (n < 2 * K) throw ConfigError("N", "grid size N < 2K violates dealiasing");
    if (!std::has_single_bit(n)) throw ConfigError("N", "must be a power of two");
    if (cutoff && !(*cutoff >= 1.0)) throw ConfigError("cutoff", "level must be >= 1");
    g0.validate();
    g1.validate();
    if (separated_from_zero) {
      if (!g0.separated_from_zero()) throw ConfigError("g0", "not separated from zero");
      if (!g1.separated_from_zero()) throw ConfigError("g1", "not separated from zero");
    }
  }
};

/// ||v||^2, or its localisation ||v||^2 phi_n(||v||^2) when a cutoff is active.
inline double energy_functional(const SpectralField& v, const ModelParams& p) {
  const double e = v.norm2();
  return p.cutoff ? e * phi_n(e, *p.cutoff) : e;
}

inline double drift_U(const State& s, const ModelParams& p) {
  return p.P - p.nu * s.U - (p.nonlinear ? energy_functional(s.v, p) : 0.0);
}

/// Per-step constants of the scheme for fixed parameters.
class Stepper {
 public:
  explicit Stepper(ModelParams params) : p_(std::move(params)) {
    p_.validate();
    const auto spec = p_.spectrum();
    n_ = p_.grid();
    damp_.resize(p_.K);
    weight_.resize(p_.K);
    for (std::size_t k = 1; k <= p_.K; ++k) {
      const double a = spec.decay_rate(k);
      damp_[k - 1] = std::exp(-a * p_.dt);
      weight_[k - 1] = noise_weight(a, p_.dt, p_.noise_scheme);
    }
    damp_U_ = std::exp(-p_.nu * p_.dt);
    // (1 - e^{-nu dt}) / nu
    gain_U_ = -std::expm1(-p_.nu * p_.dt) / p_.nu;
    weight_U_ = noise_weight(p_.nu, p_.dt, p_.noise_scheme);
  }

  const ModelParams& params() const noexcept { return p_; }

  /// One step from s with increment inc; `index` is the 1-based number of the step being taken.
  State step(const State& s, const NoiseIncrement& inc, std::size_t index = 1) const {
    const std::size_t K = p_.K;
    if (s.v.modes() != K || inc.modes() != K) throw SizeError("step: state/increment/params K mismatch");
    if (inc.dt != p_.dt) throw DomainError("step: increment dt differs from params dt");

    const double g0 = eval_g0(p_.g0, s);
    const auto gdw = project_noise(eval_g1(p_.g1, s, n_), inc.dW);

    State r;
    std::vector<double> v(K);
    if (p_.nonlinear) {
      const double e = s.v.norm2();
      const double phi = p_.cutoff ? phi_n(e, *p_.cutoff) : 1.0;
      SpectralField conv;
      try {
        conv = p_.cutoff ? dx_square(phi * s.v, n_) : dx_square(s.v, n_);
      } catch (const DomainError&) {
        throw BlowUpError(index, static_cast<double>(index) * p_.dt);  // v^2 overflowed
      }
      for (std::size_t i = 0; i < K; ++i)
        v[i] = damp_[i] * (s.v[i] + p_.dt * (s.U * s.v[i] - conv[i])) + weight_[i] * gdw[i];
      r.U = damp_U_ * s.U + gain_U_ * (p_.P - e * phi) + weight_U_ * g0 * inc.dW0;
    } else {
      for (std::size_t i = 0; i < K; ++i) v[i] = damp_[i] * s.v[i] + weight_[i] * gdw[i];
      r.U = damp_U_ * s.U + gain_U_ * p_.P + weight_U_ * g0 * inc.dW0;
    }
    const bool ok = std::isfinite(r.U) &&
                    std::all_of(v.begin(), v.end(), [](double c) { return std::isfinite(c); });
    if (!ok) throw BlowUpError(index, static_cast<double>(index) * p_.dt);
    r.v = SpectralField(std::move(v));
    return r;
  }

 private:
  ModelParams p_;
  std::size_t n_ = 0;
  std::vector<double> damp_, weight_;
  double damp_U_ = 1.0, gain_U_ = 0.0, weight_U_ = 1.0;
};

/// Exponential-Euler mild update:
///   U' = e^{-nu dt} U + ((1 - e^{-nu dt})/nu)(P - ||v||^2) + w_0 g0 dW0
///   v'_k = e^{-rate_k dt}[v_k + dt (U v_k - (v^2)_x,k)] + w_k (g1 dW1)_k
/// with w = e^{-rate dt} (left_point) or the exact-variance weight.
inline State step(const State& s, const ModelParams& p, const NoiseIncrement& inc, std::size_t index = 1) {
  return Stepper(p).step(s, inc, index);
}

/// Scalar recorded along a trajectory.
struct NamedObserver {
  std::string name;
  std::function<double(const State&)> fn;
};

struct Trajectory {
  std::vector<double> times;
  std::vector<State> states;  // empty unless stored
  std::vector<std::string> observer_names;
  std::vector<std::vector<double>> observations;  // [observer][sample]

  std::size_t size() const noexcept { return times.size(); }
  double horizon() const { return times.empty() ? 0.0 : times.back(); }
};

struct SimulateOptions {
  /// Record every n-th step (the initial state and the final state are always recorded).
  std::size_t record_every = 1;
  bool store_states = true;
  std::vector<NamedObserver> observers;
  /// Called after every step with (step index, state before, increment, state after).
  std::function<void(std::size_t, const State&, const NoiseIncrement&, const State&)> on_step;
};

inline std::size_t step_count(double T, double dt) {
  if (!(T >= 0.0)) throw DomainError("simulate: T must be >= 0");
  return static_cast<std::size_t>(std::llround(T / dt));
}

/// Integrates from `init` to T with fresh increments from the (seed, stream) generator.
inline Trajectory simulate(const ModelParams& p, const State& init, double T, RngSeed seed,
                           const SimulateOptions& opts = {}) {
  const Stepper stepper(p);
  if (init.v.modes() != p.K) throw SizeError("simulate: initial state has wrong K");
  const std::size_t steps = step_count(T, p.dt);
  const std::size_t every = std::max<std::size_t>(opts.record_every, 1);

  Trajectory tr;
  for (const auto& o : opts.observers) tr.observer_names.push_back(o.name);
  tr.observations.resize(opts.observers.size());
  auto record = [&](std::size_t n, const State& s) {
    tr.times.push_back(static_cast<double>(n) * p.dt);
    if (opts.store_states) tr.states.push_back(s);
    for (std::size_t i = 0; i < opts.observers.size(); ++i) tr.observations[i].push_back(opts.observers[i].fn(s));
  };

  Generator gen(seed);
  NoiseIncrement inc;
  State s = init;
  record(0, s);
  for (std::size_t n = 1; n <= steps; ++n) {
    sample_increment_into(gen, p.dt, p.K, inc);
    State next = stepper.step(s, inc, n);
    if (opts.on_step) opts.on_step(n, s, inc, next);
    s = std::move(next);
    if (n % every == 0 || n == steps) record(n, s);
  }
  return tr;
}

/// Standard per-step observables: U, ||v||, ||v||_{H^{1/4}} and the first `modes` coefficients.
inline std::vector<NamedObserver> standard_observers(std::size_t modes) {
  std::vector<NamedObserver> obs{
      {"U", [](const State& s) { return s.U; }},
      {"l2norm", [](const State& s) { return s.v.norm(); }},
      {"h14norm", [](const State& s) { return norm_fractional(s.v, 0.125); }},
  };
  for (std::size_t k = 1; k <= modes; ++k)
    obs.push_back({"mode_" + std::to_string(k), [k](const State& s) { return k <= s.v.modes() ? s.v[k - 1] : 0.0; }});
  return obs;
}

}  // namespace sburgers
