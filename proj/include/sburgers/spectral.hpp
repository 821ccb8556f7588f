#pragma once

// Sine-Galerkin representation of fields on (0,1) with homogeneous Dirichlet
// conditions.  Basis e_k(x) = sqrt(2) sin(k pi x), k = 1..K, orthonormal in L2(0,1).
//
// Physical-space samples live on the uniform grid x_j = j/N, j = 0..N (N a power of
// two).  With N >= 2K the trapezoidal rule on this grid integrates every product that
// appears below exactly: sine synthesis/analysis is exact for modes < N and cosine
// quadrature of a field with cosine content up to mode m is exact against cos(k pi x)
// whenever m + k < 2N.  v^2 carries modes up to 2K, so dx_square is alias-free.

#include <fftw3.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sburgers/errors.hpp"

namespace sburgers {

inline constexpr double pi = std::numbers::pi;
inline constexpr double sqrt2 = std::numbers::sqrt2;

/// Coefficients of a field in the sine basis, truncated at K modes.
class SpectralField {
 public:
  SpectralField() = default;
  explicit SpectralField(std::size_t modes) : coeffs_(modes, 0.0) {}
  explicit SpectralField(std::vector<double> coeffs) : coeffs_(std::move(coeffs)) {
    if (!all_finite()) throw DomainError("SpectralField: non-finite coefficient");
  }

  /// e_k for 1 <= k <= modes.
  static SpectralField basis(std::size_t modes, std::size_t k) {
    if (k == 0 || k > modes) throw SizeError("SpectralField::basis: mode index out of range");
    SpectralField f(modes);
    f.coeffs_[k - 1] = 1.0;
    return f;
  }

  std::size_t modes() const noexcept { return coeffs_.size(); }
  std::span<const double> coeffs() const noexcept { return coeffs_; }
  std::span<double> coeffs() noexcept { return coeffs_; }

  /// Coefficient of e_{i+1}.
  double operator[](std::size_t i) const { return coeffs_[i]; }
  double& operator[](std::size_t i) { return coeffs_[i]; }

  /// L2(0,1) norm (Parseval).
  double norm() const { return std::sqrt(norm2()); }
  double norm2() const {
    double s = 0.0;
    for (double c : coeffs_) s += c * c;
    return s;
  }

  bool all_finite() const {
    return std::all_of(coeffs_.begin(), coeffs_.end(), [](double c) { return std::isfinite(c); });
  }

  SpectralField& operator+=(const SpectralField& o) {
    check_same(o);
    for (std::size_t i = 0; i < coeffs_.size(); ++i) coeffs_[i] += o.coeffs_[i];
    return *this;
  }
  SpectralField& operator-=(const SpectralField& o) {
    check_same(o);
    for (std::size_t i = 0; i < coeffs_.size(); ++i) coeffs_[i] -= o.coeffs_[i];
    return *this;
  }
  SpectralField& operator*=(double a) {
    for (double& c : coeffs_) c *= a;
    return *this;
  }
  friend SpectralField operator+(SpectralField a, const SpectralField& b) { return a += b; }
  friend SpectralField operator-(SpectralField a, const SpectralField& b) { return a -= b; }
  friend SpectralField operator*(double s, SpectralField a) { return a *= s; }

  friend bool operator==(const SpectralField&, const SpectralField&) = default;

 private:
  void check_same(const SpectralField& o) const {
    if (o.modes() != modes()) throw SizeError("SpectralField: mismatched truncation levels");
  }

  std::vector<double> coeffs_;
};

/// Samples on x_j = j/N, j = 0..N, N a power of two.
class GridField {
 public:
  GridField() = default;
  explicit GridField(std::size_t intervals) : values_(checked(intervals) + 1, 0.0) {}
  explicit GridField(std::vector<double> values) : values_(std::move(values)) {
    if (values_.size() < 3) throw SizeError("GridField: need at least 3 samples");
    checked(values_.size() - 1);
  }

  template <class F>
  static GridField sample(std::size_t intervals, F&& f) {
    GridField g(intervals);
    for (std::size_t j = 0; j <= intervals; ++j) g.values_[j] = f(g.node(j));
    return g;
  }

  static GridField constant(std::size_t intervals, double value) {
    GridField g(intervals);
    std::fill(g.values_.begin(), g.values_.end(), value);
    return g;
  }

  std::size_t intervals() const noexcept { return values_.empty() ? 0 : values_.size() - 1; }
  double node(std::size_t j) const { return static_cast<double>(j) / static_cast<double>(intervals()); }
  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }
  double operator[](std::size_t j) const { return values_[j]; }
  double& operator[](std::size_t j) { return values_[j]; }

  bool is_uniform() const {
    return std::all_of(values_.begin(), values_.end(), [&](double x) { return x == values_.front(); });
  }

  friend bool operator==(const GridField&, const GridField&) = default;

 private:
  static std::size_t checked(std::size_t n) {
    if (n < 2 || !std::has_single_bit(n)) throw SizeError("GridField: N must be a power of two >= 2");
    return n;
  }

  std::vector<double> values_;
};

/// Smallest admissible grid for K modes: power of two with N >= 2K.
inline std::size_t dealiased_grid_size(std::size_t modes) {
  return std::bit_ceil(std::max<std::size_t>(2 * modes, 2));
}

enum class NuConvention {
  physical,       // semigroup factor exp(-nu pi^2 k^2 t)
  paper_literal,  // semigroup factor exp(-(pi^2/nu) k^2 t)
};

/// Dirichlet Laplacian spectrum together with the viscosity placement.
struct OperatorSpectrum {
  double nu = 1.0;
  NuConvention convention = NuConvention::physical;

  /// lambda_k = pi^2 k^2, used for the fractional-power norms.
  static double lambda(std::size_t k) {
    const double kk = static_cast<double>(k);
    return pi * pi * kk * kk;
  }

  /// Exponential decay rate of mode k under the heat semigroup.
  double decay_rate(std::size_t k) const {
    return convention == NuConvention::physical ? nu * lambda(k) : lambda(k) / nu;
  }

  double factor(std::size_t k, double t) const { return std::exp(-decay_rate(k) * t); }
};

enum class TransformPath { direct, fast };

namespace detail {

// FFTW plans are created once per (kind, size) under a lock and executed
// concurrently with fftw_execute_r2r, which is thread-safe.
class PlanRegistry {
 public:
  static PlanRegistry& instance() {
    static PlanRegistry registry;
    return registry;
  }

  fftw_plan get(fftw_r2r_kind kind, int n) {
    const auto key = std::make_pair(static_cast<int>(kind), n);
    std::lock_guard lock(mutex_);
    if (auto it = plans_.find(key); it != plans_.end()) return it->second;
    double* in = fftw_alloc_real(static_cast<std::size_t>(n));
    double* out = fftw_alloc_real(static_cast<std::size_t>(n));
    fftw_plan plan = fftw_plan_r2r_1d(n, in, out, kind, FFTW_ESTIMATE | FFTW_UNALIGNED);
    fftw_free(in);
    fftw_free(out);
    plans_.emplace(key, plan);
    return plan;
  }

  PlanRegistry(const PlanRegistry&) = delete;
  PlanRegistry& operator=(const PlanRegistry&) = delete;

 private:
  PlanRegistry() = default;
  ~PlanRegistry() {
    for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
  }

  std::mutex mutex_;
  std::map<std::pair<int, int>, fftw_plan> plans_;
};

inline void r2r(fftw_r2r_kind kind, std::vector<double>& in, std::vector<double>& out) {
  const int n = static_cast<int>(in.size());
  out.resize(in.size());
  fftw_execute_r2r(PlanRegistry::instance().get(kind, n), in.data(), out.data());
}

}  // namespace detail

/// Grid values of sum_k c_k sqrt(2) sin(k pi x_j), j = 0..N.
inline GridField to_grid(std::span<const double> coeffs, std::size_t intervals,
                         TransformPath path = TransformPath::fast) {
  const std::size_t K = coeffs.size();
  if (intervals < 2 * K) throw ConfigError("N", "grid size N < 2K violates dealiasing");
  GridField g(intervals);
  const std::size_t N = intervals;
  if (path == TransformPath::direct) {
    for (std::size_t j = 1; j < N; ++j) {
      double s = 0.0;
      for (std::size_t k = 1; k <= K; ++k)
        s += coeffs[k - 1] * std::sin(pi * static_cast<double>(k * j) / static_cast<double>(N));
      g[j] = sqrt2 * s;
    }
    return g;
  }
  // RODFT00 of length N-1: out_j = 2 sum_k in_k sin(pi (j+1)(k+1)/N).
  std::vector<double> in(N - 1, 0.0), out;
  std::copy(coeffs.begin(), coeffs.end(), in.begin());
  detail::r2r(FFTW_RODFT00, in, out);
  for (std::size_t j = 1; j < N; ++j) g[j] = out[j - 1] / sqrt2;
  return g;
}

inline GridField to_grid(const SpectralField& f, std::size_t intervals,
                         TransformPath path = TransformPath::fast) {
  return to_grid(f.coeffs(), intervals, path);
}

/// Sine coefficients sqrt(2) int g(x) sin(k pi x) dx, k = 1..K, by the trapezoidal rule.
inline SpectralField from_grid(const GridField& g, std::size_t modes,
                               TransformPath path = TransformPath::fast) {
  const std::size_t N = g.intervals();
  if (N < 2 * modes) throw ConfigError("N", "grid size N < 2K violates dealiasing");
  std::vector<double> c(modes, 0.0);
  const double scale = sqrt2 / static_cast<double>(N);
  if (path == TransformPath::direct) {
    for (std::size_t k = 1; k <= modes; ++k) {
      double s = 0.0;
      for (std::size_t j = 1; j < N; ++j)
        s += g[j] * std::sin(pi * static_cast<double>(k * j) / static_cast<double>(N));
      c[k - 1] = scale * s;
    }
  } else {
    std::vector<double> in(g.values().begin() + 1, g.values().end() - 1), out;
    detail::r2r(FFTW_RODFT00, in, out);
    for (std::size_t k = 1; k <= modes; ++k) c[k - 1] = 0.5 * scale * out[k - 1];
  }
  return SpectralField(std::move(c));
}

/// Trapezoidal int_0^1 g(x) cos(k pi x) dx for k = 1..K.
inline std::vector<double> cosine_quadrature(const GridField& g, std::size_t modes,
                                             TransformPath path = TransformPath::fast) {
  const std::size_t N = g.intervals();
  if (modes > N) throw SizeError("cosine_quadrature: more modes than grid intervals");
  std::vector<double> c(modes, 0.0);
  const double h = 1.0 / static_cast<double>(N);
  if (path == TransformPath::direct) {
    for (std::size_t k = 1; k <= modes; ++k) {
      const double sign = (k % 2 == 0) ? 1.0 : -1.0;
      double s = 0.5 * (g[0] + sign * g[N]);
      for (std::size_t j = 1; j < N; ++j)
        s += g[j] * std::cos(pi * static_cast<double>(k * j) / static_cast<double>(N));
      c[k - 1] = h * s;
    }
    return c;
  }
  // REDFT00 of length N+1: out_k = x_0 + (-1)^k x_N + 2 sum_{j=1}^{N-1} x_j cos(pi j k / N).
  std::vector<double> in(g.values().begin(), g.values().end()), out;
  detail::r2r(FFTW_REDFT00, in, out);
  for (std::size_t k = 1; k <= modes; ++k) c[k - 1] = 0.5 * h * out[k];
  return c;
}

/// Heat semigroup S(t).
inline SpectralField apply_semigroup(const SpectralField& f, double t, const OperatorSpectrum& spec) {
  if (!(t >= 0.0)) throw DomainError("apply_semigroup: t must be >= 0");
  SpectralField r = f;
  for (std::size_t k = 1; k <= r.modes(); ++k) r[k - 1] *= spec.factor(k, t);
  return r;
}

/// S(t) applied to the distribution d(psi)/dx, truncated at K modes.  Integration by
/// parts against e_k (which vanishes at both ends) gives coefficient
/// -sqrt(2) k pi exp(-rate_k t) int psi cos(k pi x) dx, also for psi not vanishing at 0, 1.
inline SpectralField semigroup_of_derivative(const GridField& psi, double t, const OperatorSpectrum& spec,
                                             std::size_t modes, TransformPath path = TransformPath::fast) {
  if (!(t > 0.0)) throw DomainError("semigroup_of_derivative: t must be > 0");
  const auto c = cosine_quadrature(psi, modes, path);
  std::vector<double> r(modes);
  for (std::size_t k = 1; k <= modes; ++k)
    r[k - 1] = -sqrt2 * pi * static_cast<double>(k) * spec.factor(k, t) * c[k - 1];
  return SpectralField(std::move(r));
}

/// (sum_k 2 pi^2 k^2 exp(-2 rate_k t))^{1/2}: the constant B(t) in
/// ||S(t) psi'|| <= B(t) ||psi||_{L1}.  The series is summed until its terms underflow.
inline double derivative_semigroup_bound(double t, const OperatorSpectrum& spec) {
  if (!(t > 0.0)) throw DomainError("derivative_semigroup_bound: t must be > 0");
  double s = 0.0;
  for (std::size_t k = 1;; ++k) {
    const double kk = static_cast<double>(k);
    const double term = 2.0 * pi * pi * kk * kk * std::exp(-2.0 * spec.decay_rate(k) * t);
    s += term;
    if (term < 1e-300 || (term < 1e-18 * s && spec.decay_rate(k) * t > 1.0)) break;
  }
  return std::sqrt(s);
}

/// Relative slack when counting violations of the derivative bound: a boundary spike attains
/// it with equality, so only rounding separates the two sides.
inline constexpr double derivative_bound_roundoff = 1e-12;

/// C = max over `times` of sqrt(t) B(t), so that B(t) <= C t^{-1/2} on that grid.
inline double derivative_semigroup_constant(std::span<const double> times, const OperatorSpectrum& spec) {
  double C = 0.0;
  for (double t : times) C = std::max(C, std::sqrt(t) * derivative_semigroup_bound(t, spec));
  return C;
}

/// Sine coefficients of d(v^2)/dx, evaluated on a dealiased grid.
inline SpectralField dx_square(const SpectralField& v, std::size_t intervals = 0,
                               TransformPath path = TransformPath::fast) {
  const std::size_t K = v.modes();
  const std::size_t N = intervals == 0 ? dealiased_grid_size(K) : intervals;
  GridField g = to_grid(v, N, path);
  for (double& x : g.values()) x *= x;
  const auto c = cosine_quadrature(g, K, path);
  std::vector<double> r(K);
  for (std::size_t k = 1; k <= K; ++k) r[k - 1] = -sqrt2 * pi * static_cast<double>(k) * c[k - 1];
  return SpectralField(std::move(r));
}

/// ||(-A)^alpha f|| with lambda_k = pi^2 k^2.  alpha = 1/8 is the H^{1/4} norm, 1/2 the H^1_0 norm.
inline double norm_fractional(const SpectralField& f, double alpha) {
  if (!(alpha >= 0.0)) throw DomainError("norm_fractional: alpha must be >= 0");
  double s = 0.0;
  for (std::size_t k = 1; k <= f.modes(); ++k) {
    const double w = alpha == 0.0 ? 1.0 : std::pow(OperatorSpectrum::lambda(k), 2.0 * alpha);
    s += w * f[k - 1] * f[k - 1];
  }
  return std::sqrt(s);
}

/// Trapezoidal int_0^1 |g| dx.
inline double norm_l1(const GridField& g) {
  const std::size_t N = g.intervals();
  double s = 0.5 * (std::abs(g[0]) + std::abs(g[N]));
  for (std::size_t j = 1; j < N; ++j) s += std::abs(g[j]);
  return s / static_cast<double>(N);
}

/// (int_0^1 f^4 dx)^{1/4}.  f^4 has cosine content up to mode 4K, so the trapezoidal
/// rule is evaluated on a grid with N >= 4K where it is exact.
inline double norm_l4(const SpectralField& f) {
  if (f.modes() == 0) return 0.0;
  const GridField g = to_grid(f, dealiased_grid_size(2 * f.modes()));
  const std::size_t N = g.intervals();
  double s = 0.0;
  for (std::size_t j = 1; j < N; ++j) {
    const double x2 = g[j] * g[j];
    s += x2 * x2;
  }
  return std::pow(s / static_cast<double>(N), 0.25);
}

/// <f, h> in L2(0,1).
inline double inner(const SpectralField& f, const SpectralField& h) {
  if (f.modes() != h.modes()) throw SizeError("inner: mismatched truncation levels");
  double s = 0.0;
  for (std::size_t i = 0; i < f.modes(); ++i) s += f[i] * h[i];
  return s;
}

}  // namespace sburgers
