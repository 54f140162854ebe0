#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "doobgen/error.hpp"
#include "doobgen/matrix.hpp"
#include "doobgen/random.hpp"
#include "doobgen/schedule.hpp"
#include "doobgen/spectral.hpp"

namespace doobgen {

/// Discretely observed trajectory; row k of `states` is the state at `times[k]`.
struct PathSample {
  std::vector<double> times;
  Matrix states;
};

/// A point of the bridge X_t | X_T = y.
struct BridgePoint {
  double t = 0.0;
  FieldCoefficients x;
  FieldCoefficients y;
};

/// Closest distance to T at which transition scores are still evaluated.
inline constexpr double score_singularity_margin = 1e-9;

namespace detail {

inline void check_dim(const ProcessSpec& spec, std::span<const double> v, const char* what) {
  if (v.size() != spec.dim()) {
    throw ShapeError(std::string(what) + ": expected " + std::to_string(spec.dim()) + " coefficients, got " +
                     std::to_string(v.size()));
  }
}

}  // namespace detail

/// Exact draw of X_t given X_s = x: coordinate j ~ N(u_j(t,s) x_j, q_j(t,s)).
inline FieldCoefficients transition_sample(const ProcessSpec& spec, std::span<const double> x, double s, double t,
                                           Rng& rng) {
  detail::check_dim(spec, x, "transition_sample");
  const auto k = transition_kernel(spec, s, t);
  FieldCoefficients out(spec.dim());
  for (std::size_t j = 0; j < spec.dim(); ++j) out[j] = k.factor[j] * x[j] + std::sqrt(k.variance[j]) * rng.normal();
  return out;
}

/// Samples the process started at x0 (time 0) at each of the increasing `times`
/// by chaining exact Gaussian transitions.
inline PathSample forward_sample(const ProcessSpec& spec, std::span<const double> x0, std::span<const double> times,
                                 Rng& rng) {
  detail::check_dim(spec, x0, "forward_sample");
  detail::require<InputError>(!times.empty(), "forward_sample: empty time grid");
  for (std::size_t k = 1; k < times.size(); ++k) {
    detail::require<InputError>(times[k] > times[k - 1], "forward_sample: times must be strictly increasing");
  }
  PathSample path{std::vector<double>(times.begin(), times.end()), Matrix(times.size(), spec.dim())};
  FieldCoefficients state(x0.begin(), x0.end());
  double current = 0.0;
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (times[k] != current) state = transition_sample(spec, state, current, times[k], rng);
    current = times[k];
    path.states.set_row(k, state);
  }
  return path;
}

/// Draw from the bridge X_t | X_T = y under stationary initialisation N(0, C):
/// mean U(T,t) y, covariance C (I - U(T,t)^2).
inline BridgePoint bridge_sample(const ProcessSpec& spec, std::span<const double> y, double t, Rng& rng) {
  detail::check_dim(spec, y, "bridge_sample");
  const auto k = transition_kernel(spec, t, spec.horizon());
  BridgePoint p{t, FieldCoefficients(spec.dim()), FieldCoefficients(y.begin(), y.end())};
  for (std::size_t j = 0; j < spec.dim(); ++j) p.x[j] = k.factor[j] * y[j] + std::sqrt(k.variance[j]) * rng.normal();
  return p;
}

/// Gradient in x of log p(t, x; T, y):
///   u_j(T,t) (y_j - u_j(T,t) x_j) / q_j(T,t).
inline FieldCoefficients transition_score(const ProcessSpec& spec, std::span<const double> x, double t,
                                          std::span<const double> y) {
  detail::check_dim(spec, x, "transition_score");
  detail::check_dim(spec, y, "transition_score");
  if (t > spec.horizon() - score_singularity_margin) {
    throw DomainError("transition_score: t = " + std::to_string(t) + " is at the singular endpoint T");
  }
  const auto k = transition_kernel(spec, t, spec.horizon());
  FieldCoefficients s(spec.dim());
  for (std::size_t j = 0; j < spec.dim(); ++j) s[j] = k.factor[j] * (y[j] - k.factor[j] * x[j]) / k.variance[j];
  return s;
}

/// Gaussian log transition density log p(t, x; T, y) w.r.t. Lebesgue measure on R^D.
inline double log_transition_density(const ProcessSpec& spec, std::span<const double> x, double t,
                                     std::span<const double> y) {
  detail::check_dim(spec, x, "log_transition_density");
  detail::check_dim(spec, y, "log_transition_density");
  const auto k = transition_kernel(spec, t, spec.horizon());
  double lp = 0.0;
  for (std::size_t j = 0; j < spec.dim(); ++j) {
    const double r = y[j] - k.factor[j] * x[j];
    lp += -0.5 * (r * r / k.variance[j] + std::log(2.0 * std::numbers::pi * k.variance[j]));
  }
  return lp;
}

/// Process of the mollifying noise dY = -C^-gamma Y / 2 dt + sqrt(C^(1-gamma)) dW on [0, eps].
inline ProcessSpec mollifier_spec(const CovarianceSpectrum& spectrum, double gamma, double eps) {
  detail::require<ParameterError>(eps > 0.0 && std::isfinite(eps), "mollifier: eps must be positive");
  return ProcessSpec(spectrum, NoiseSchedule::constant(1.0, eps), gamma);
}

/// Y_eps given Y_0 = y0 for a mollifier process built by mollifier_spec.
inline FieldCoefficients mollify(const ProcessSpec& spec_eps, std::span<const double> y0, Rng& rng) {
  detail::require<ParameterError>(spec_eps.horizon() > 0.0, "mollify: horizon must be positive");
  detail::require<ParameterError>(spec_eps.schedule().kind() == ScheduleKind::constant &&
                                      spec_eps.schedule().beta0() == 1.0,
                                  "mollify: the mollifier runs with beta = 1");
  return transition_sample(spec_eps, y0, 0.0, spec_eps.horizon(), rng);
}

inline FieldCoefficients mollify(const CovarianceSpectrum& spectrum, double gamma, double eps,
                                 std::span<const double> y0, Rng& rng) {
  return mollify(mollifier_spec(spectrum, gamma, eps), y0, rng);
}

}  // namespace doobgen
