#pragma once

// Wiener increments and the damped stochastic convolutions
//   Z_L(t) = int_0^t e^{-L(t-s)} S(t-s) g1 dW1(s),   Y_L(t) = int_0^t e^{-(L+nu)(t-s)} g0 dW0(s).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "sburgers/errors.hpp"
#include "sburgers/spectral.hpp"

namespace sburgers {

inline constexpr std::uint64_t default_seed = 20161014;

struct RngSeed {
  std::uint64_t seed = default_seed;
  std::uint64_t stream_id = 0;
};

/// Gaussian source for one path.
///
/// The engine is std::mt19937_64 seeded through std::seed_seq from the four 32-bit
/// halves of (seed, stream_id); both are fully specified by the standard, so a given
/// (seed, stream_id) produces the same stream on every conforming platform.  Normals use
/// the Box-Muller transform on 53-bit uniforms in (0,1), emitting cos then sin.
class Generator {
 public:
  explicit Generator(RngSeed s = {}) {
    std::seed_seq seq{static_cast<std::uint32_t>(s.seed), static_cast<std::uint32_t>(s.seed >> 32),
                      static_cast<std::uint32_t>(s.stream_id), static_cast<std::uint32_t>(s.stream_id >> 32)};
    engine_.seed(seq);
  }

  double uniform() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * pi * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Brownian increments over one step: the scalar dW0 and the K mode increments dW^k.
struct NoiseIncrement {
  double dt = 0.0;
  double dW0 = 0.0;
  std::vector<double> dW;

  std::size_t modes() const noexcept { return dW.size(); }
};

/// Refills `inc` with K+1 independent N(0, dt) draws, scalar first.
inline void sample_increment_into(Generator& gen, double dt, std::size_t modes, NoiseIncrement& inc) {
  if (!(dt >= 0.0)) throw DomainError("sample_increment: dt must be >= 0");
  const double sd = std::sqrt(dt);
  inc.dt = dt;
  inc.dW.resize(modes);
  inc.dW0 = sd * gen.normal();
  for (double& w : inc.dW) w = sd * gen.normal();
  if (dt == 0.0) {
    inc.dW0 = 0.0;
    std::fill(inc.dW.begin(), inc.dW.end(), 0.0);
  }
}

inline NoiseIncrement sample_increment(Generator& gen, double dt, std::size_t modes) {
  NoiseIncrement inc;
  sample_increment_into(gen, dt, modes, inc);
  return inc;
}

/// How the stochastic integral over one step enters the exponential-Euler update.
enum class NoiseScheme {
  /// e^{-a dt} (x + g dW): increment added, then the whole bracket damped.
  left_point,
  /// e^{-a dt} x + sqrt((1 - e^{-2a dt}) / (2a dt)) g dW: the exact conditional law of
  /// int e^{-a(t-s)} g dW(s) for g frozen over the step.
  exact_variance,
};

/// Multiplier applied to g*dW for a mode damped at rate a.
inline double noise_weight(double rate, double dt, NoiseScheme scheme) {
  const double x = rate * dt;
  if (scheme == NoiseScheme::left_point) return std::exp(-x);
  if (x == 0.0) return 1.0;
  return std::sqrt(-std::expm1(-2.0 * x) / (2.0 * x));
}

/// Sine coefficients of g1(x) * sum_k dW^k e_k(x): the multiplication operator g1 applied
/// to the truncated cylindrical increment.  A spatially uniform g1 is applied directly.
inline std::vector<double> project_noise(const GridField& g1, std::span<const double> dW) {
  const std::size_t K = dW.size();
  if (g1.is_uniform()) {
    std::vector<double> r(dW.begin(), dW.end());
    const double c = g1[0];
    for (double& x : r) x *= c;
    return r;
  }
  GridField w = to_grid(dW, g1.intervals());
  for (std::size_t j = 0; j <= w.intervals(); ++j) w[j] *= g1[j];
  const SpectralField p = from_grid(w, K);
  return {p.coeffs().begin(), p.coeffs().end()};
}

/// Co-simulated convolutions Z_L (field) and Y_L (scalar) with damping L.
struct ConvolutionState {
  SpectralField Z;
  double Y = 0.0;
  double L = 0.0;

  static ConvolutionState zero(std::size_t modes, double L) { return {SpectralField(modes), 0.0, L}; }
};

inline ConvolutionState convolution_step_z(const ConvolutionState& cs, const GridField& g1,
                                           const NoiseIncrement& inc, const OperatorSpectrum& spec,
                                           NoiseScheme scheme = NoiseScheme::exact_variance) {
  const std::size_t K = cs.Z.modes();
  if (inc.modes() != K) throw SizeError("convolution_step_z: increment and state have different K");
  const auto gdw = project_noise(g1, inc.dW);
  ConvolutionState r = cs;
  for (std::size_t k = 1; k <= K; ++k) {
    const double a = cs.L + spec.decay_rate(k);
    r.Z[k - 1] = std::exp(-a * inc.dt) * cs.Z[k - 1] + noise_weight(a, inc.dt, scheme) * gdw[k - 1];
  }
  return r;
}

inline ConvolutionState convolution_step_y(const ConvolutionState& cs, double g0, const NoiseIncrement& inc,
                                           double nu, NoiseScheme scheme = NoiseScheme::exact_variance) {
  ConvolutionState r = cs;
  const double a = cs.L + nu;
  r.Y = std::exp(-a * inc.dt) * cs.Y + noise_weight(a, inc.dt, scheme) * g0 * inc.dW0;
  return r;
}

/// sum_{k<=K} sigma^2 / (2 (L + rate_k)): stationary E||Z_L||^2 for constant g1 = sigma.
inline double stationary_variance_z(double L, const OperatorSpectrum& spec, double sigma, std::size_t modes) {
  if (!(L >= 0.0) || !(sigma >= 0.0)) throw DomainError("stationary_variance_z: need L >= 0, sigma >= 0");
  double s = 0.0;
  for (std::size_t k = 1; k <= modes; ++k) s += sigma * sigma / (2.0 * (L + spec.decay_rate(k)));
  return s;
}

/// sigma^2 / (2 (L + nu)): stationary E Y_L^2 for constant g0 = sigma.
inline double stationary_variance_y(double L, double nu, double sigma) {
  return sigma * sigma / (2.0 * (L + nu));
}

}  // namespace sburgers
