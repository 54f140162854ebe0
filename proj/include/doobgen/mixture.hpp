#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "doobgen/error.hpp"
#include "doobgen/matrix.hpp"
#include "doobgen/random.hpp"
#include "doobgen/schedule.hpp"
#include "doobgen/spectral.hpp"

namespace doobgen {

/// Two-component Gaussian mixture alpha N(u, C) + (1 - alpha) N(-u, C).
class MixtureTarget {
 public:
  MixtureTarget(double alpha, FieldCoefficients mean, CovarianceSpectrum spectrum)
      : alpha_(alpha), mean_(std::move(mean)), spectrum_(std::move(spectrum)) {
    // alpha = 1 is admitted as the single-Gaussian limit.
    detail::require<ParameterError>(alpha > 0.0 && alpha <= 1.0, "MixtureTarget: alpha must lie in (0, 1]");
    detail::require<ShapeError>(mean_.size() == spectrum_.dim(), "MixtureTarget: mean/spectrum dimension mismatch");
    for (double v : mean_) detail::require<ParameterError>(std::isfinite(v), "MixtureTarget: non-finite mean");
  }

  double alpha() const noexcept { return alpha_; }
  const FieldCoefficients& mean() const noexcept { return mean_; }
  const CovarianceSpectrum& spectrum() const noexcept { return spectrum_; }
  std::size_t dim() const noexcept { return mean_.size(); }

  /// sum_j u_j^2 / c_j, finite at any truncation; the Cameron-Martin norm of u.
  double cameron_martin_norm_sq() const {
    double s = 0.0;
    for (std::size_t j = 0; j < dim(); ++j) s += mean_[j] * mean_[j] / spectrum_[j];
    return s;
  }

  /// log(alpha / (1 - alpha)) / 2; +inf for alpha = 1.
  double half_log_odds() const { return 0.5 * (std::log(alpha_) - std::log1p(-alpha_)); }

 private:
  double alpha_;
  FieldCoefficients mean_;
  CovarianceSpectrum spectrum_;
};

/// Mean function of the benchmark mixture, u(xi) = 2 xi^1.5 (pi - xi)^1.5 on [0, 1].
inline double benchmark_mean_function(double xi) {
  return 2.0 * std::pow(xi, 1.5) * std::pow(std::numbers::pi - xi, 1.5);
}

/// Sine coefficients of benchmark_mean_function on a 4096-point grid.
inline FieldCoefficients benchmark_mean(std::size_t D, std::size_t grid_points = 4096) {
  const BasisGrid grid(D, grid_points);
  return project_field(tabulate(benchmark_mean_function, grid), grid);
}

inline FieldCoefficients sample_target(const MixtureTarget& target, Rng& rng) {
  const double sign = rng.uniform() < target.alpha() ? 1.0 : -1.0;
  FieldCoefficients x(target.dim());
  for (std::size_t j = 0; j < target.dim(); ++j) {
    x[j] = sign * target.mean()[j] + std::sqrt(target.spectrum()[j]) * rng.normal();
  }
  return x;
}

inline Matrix sample_target(const MixtureTarget& target, std::size_t n, Seed seed) {
  Matrix out(n, target.dim());
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, i));
    out.set_row(i, sample_target(target, rng));
  }
  return out;
}

namespace detail {

inline void check_target(const MixtureTarget& target, const ProcessSpec& spec, std::span<const double> x,
                         double t) {
  require<ShapeError>(target.dim() == spec.dim(), "mixture: target/process dimension mismatch");
  require<ShapeError>(x.size() == spec.dim(), "mixture: state dimension mismatch");
  for (std::size_t j = 0; j < spec.dim(); ++j) {
    require<ParameterError>(target.spectrum()[j] == spec.spectrum()[j],
                            "mixture: target covariance must equal the reference covariance C");
  }
  if (!(t >= 0.0 && t < spec.horizon())) {
    throw DomainError("mixture: h and its gradient are defined for 0 <= t < T, got t = " + std::to_string(t));
  }
}

/// Component log-likelihood-ratio terms of h at (t, x).
///
/// Writing m_j = u_j(T,t), the integral defining h factorises per component into
///   h_+-(t, x) = exp(+-r - k),  r = sum_j u_j m_j x_j / c_j,  k = sum_j u_j^2 m_j^2 / (2 c_j),
/// so h = alpha h_+ + (1 - alpha) h_-.
struct MixtureTerms {
  std::vector<double> factor;  // m_j
  double r = 0.0;
  double k = 0.0;
};

inline MixtureTerms mixture_terms(const MixtureTarget& target, const ProcessSpec& spec, std::span<const double> x,
                                  double t) {
  const double I = spec.schedule().integral(t, spec.horizon());
  MixtureTerms out;
  out.factor.resize(spec.dim());
  for (std::size_t j = 0; j < spec.dim(); ++j) {
    const double m = std::exp(-spec.drift_eigenvalue(j) * I);
    const double um = target.mean()[j] * m;
    const double c = spec.spectrum()[j];
    out.factor[j] = m;
    out.r += um * x[j] / c;
    out.k += 0.5 * um * um / c;
  }
  return out;
}

}  // namespace detail

/// log h(t, x) for the mixture target, stable for well-separated modes.
inline double log_h_value(const MixtureTarget& target, const ProcessSpec& spec, double t, std::span<const double> x) {
  detail::check_target(target, spec, x, t);
  const auto terms = detail::mixture_terms(target, spec, x, t);
  const double lp = std::log(target.alpha()) + terms.r;
  const double lm = std::log1p(-target.alpha()) - terms.r;
  const double hi = std::max(lp, lm);
  return -terms.k + hi + std::log(std::exp(lp - hi) + std::exp(lm - hi));
}

inline double h_value(const MixtureTarget& target, const ProcessSpec& spec, double t, std::span<const double> x) {
  return std::exp(log_h_value(target, spec, t, x));
}

/// Steering function s(t, x) = D_x log h(t, x):
///   s_j = (u_j m_j / c_j) tanh(r + log(alpha / (1 - alpha)) / 2).
inline FieldCoefficients steering(const MixtureTarget& target, const ProcessSpec& spec, double t,
                                  std::span<const double> x) {
  detail::check_target(target, spec, x, t);
  const auto terms = detail::mixture_terms(target, spec, x, t);
  const double w = std::tanh(terms.r + target.half_log_odds());
  FieldCoefficients s(spec.dim());
  for (std::size_t j = 0; j < spec.dim(); ++j) {
    s[j] = w * target.mean()[j] * terms.factor[j] / spec.spectrum()[j];
  }
  return s;
}

/// Steering for every row of `states` at a common time.
inline Matrix steering(const MixtureTarget& target, const ProcessSpec& spec, double t, const Matrix& states) {
  Matrix out(states.rows(), states.cols());
  for (std::size_t i = 0; i < states.rows(); ++i) out.set_row(i, steering(target, spec, t, states.row(i)));
  return out;
}

/// s(0, x) = D_x log h(0, x).
inline FieldCoefficients initial_score(const MixtureTarget& target, const ProcessSpec& spec,
                                       std::span<const double> x) {
  return steering(target, spec, 0.0, x);
}

/// Score of the reference measure N(0, C): -x_j / c_j.
inline FieldCoefficients reference_score(const ProcessSpec& spec, std::span<const double> x) {
  detail::require<ShapeError>(x.size() == spec.dim(), "reference_score: dimension mismatch");
  FieldCoefficients s(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) s[j] = -x[j] / spec.spectrum()[j];
  return s;
}

/// Gradient of the log-density of h(0, x) N(0, C)(dx).
inline FieldCoefficients initial_log_density_gradient(const MixtureTarget& target, const ProcessSpec& spec,
                                                      std::span<const double> x) {
  auto g = reference_score(spec, x);
  const auto s = initial_score(target, spec, x);
  for (std::size_t j = 0; j < g.size(); ++j) g[j] += s[j];
  return g;
}

}  // namespace doobgen
