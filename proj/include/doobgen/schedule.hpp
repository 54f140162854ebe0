#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include "doobgen/error.hpp"
#include "doobgen/spectral.hpp"

namespace doobgen {

enum class ScheduleKind { constant, linear, cosine };

inline std::string to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::constant: return "constant";
    case ScheduleKind::linear: return "linear";
    case ScheduleKind::cosine: return "cosine";
  }
  return "unknown";
}

inline ScheduleKind parse_schedule_kind(const std::string& s) {
  if (s == "constant") return ScheduleKind::constant;
  if (s == "linear") return ScheduleKind::linear;
  if (s == "cosine") return ScheduleKind::cosine;
  throw ConfigError("unknown schedule kind '" + s + "' (expected constant, linear or cosine)");
}

namespace detail {

template <typename F>
double adaptive_simpson_step(const F& f, double a, double b, double fa, double fm, double fb, double whole,
                             double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = f(lm);
  const double frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  return adaptive_simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         adaptive_simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

/// Adaptive Simpson quadrature of f over [a, b] to absolute tolerance tol.
template <typename F>
double adaptive_simpson(const F& f, double a, double b, double tol, int max_depth = 50) {
  if (a == b) return 0.0;
  const double fa = f(a);
  const double fb = f(b);
  const double fm = f(0.5 * (a + b));
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return adaptive_simpson_step(f, a, b, fa, fm, fb, whole, tol, max_depth);
}

}  // namespace detail

/// Noise schedule beta(t) on [0, T] with its exact time integral.
///
/// Linear and cosine schedules are parametrised in the rescaled time t / T so the
/// same schedule can be used with any horizon. With `reversed` set the schedule
/// is evaluated as beta(T - t), which is how forced processes run a noising
/// schedule backwards.
class NoiseSchedule {
 public:
  static constexpr double cosine_offset = 0.008;
  static constexpr double cosine_beta_min = 1e-4;
  static constexpr double cosine_beta_max = 20.0;
  static constexpr double simpson_tolerance = 1e-10;

  static NoiseSchedule constant(double beta, double horizon) {
    detail::require<ParameterError>(beta > 0.0 && std::isfinite(beta), "NoiseSchedule: beta must be positive");
    return NoiseSchedule(ScheduleKind::constant, beta, beta, horizon, false);
  }

  static NoiseSchedule linear(double beta0, double beta1, double horizon, bool reversed = false) {
    detail::require<ParameterError>(beta0 > 0.0 && beta1 > 0.0, "NoiseSchedule: beta0 and beta1 must be positive");
    return NoiseSchedule(ScheduleKind::linear, beta0, beta1, horizon, reversed);
  }

  static NoiseSchedule cosine(double horizon, bool reversed = false) {
    return NoiseSchedule(ScheduleKind::cosine, 0.0, 0.0, horizon, reversed);
  }

  ScheduleKind kind() const noexcept { return kind_; }
  double beta0() const noexcept { return beta0_; }
  double beta1() const noexcept { return beta1_; }
  double horizon() const noexcept { return horizon_; }
  bool reversed() const noexcept { return reversed_; }

  /// Same schedule with every rate multiplied by k (cosine schedules are not scalable).
  NoiseSchedule scaled(double k) const {
    detail::require<ParameterError>(kind_ != ScheduleKind::cosine, "NoiseSchedule::scaled: cosine schedule");
    detail::require<ParameterError>(k > 0.0, "NoiseSchedule::scaled: factor must be positive");
    return NoiseSchedule(kind_, k * beta0_, k * beta1_, horizon_, reversed_);
  }

  double beta(double t) const {
    check_time(t);
    return base_beta(reversed_ ? horizon_ - t : t);
  }

  /// int_s^t beta(r) dr for 0 <= s <= t <= T.
  double integral(double s, double t) const {
    check_time(s);
    check_time(t);
    detail::require<DomainError>(s <= t, "NoiseSchedule::integral: requires s <= t");
    if (!reversed_) return base_integral(s, t);
    return base_integral(horizon_ - t, horizon_ - s);
  }

  /// Signed integral; antisymmetric in its arguments by construction.
  double signed_integral(double s, double t) const {
    return s <= t ? integral(s, t) : -integral(t, s);
  }

 private:
  NoiseSchedule(ScheduleKind kind, double b0, double b1, double horizon, bool reversed)
      : kind_(kind), beta0_(b0), beta1_(b1), horizon_(horizon), reversed_(reversed) {
    detail::require<ParameterError>(horizon > 0.0 && std::isfinite(horizon), "NoiseSchedule: horizon must be positive");
  }

  void check_time(double t) const {
    // Grid arithmetic may overshoot T by a few ulps.
    const double slack = 1e-12 * horizon_;
    if (!(t >= -slack && t <= horizon_ + slack)) {
      throw DomainError("NoiseSchedule: time " + std::to_string(t) + " outside [0, " + std::to_string(horizon_) + "]");
    }
  }

  double base_beta(double t) const {
    switch (kind_) {
      case ScheduleKind::constant: return beta0_;
      case ScheduleKind::linear: return beta0_ + (t / horizon_) * (beta1_ - beta0_);
      case ScheduleKind::cosine: {
        const double theta = ((t / horizon_ + cosine_offset) / (1.0 + cosine_offset)) * 0.5 * std::numbers::pi;
        // -d/dt log cos^2(theta(t))
        const double raw = std::numbers::pi * std::tan(theta) / (horizon_ * (1.0 + cosine_offset));
        if (!std::isfinite(raw)) return cosine_beta_max;
        return std::clamp(raw, cosine_beta_min, cosine_beta_max);
      }
    }
    return 0.0;
  }

  double base_antiderivative(double t) const {
    switch (kind_) {
      case ScheduleKind::constant: return beta0_ * t;
      case ScheduleKind::linear: return beta0_ * t + (beta1_ - beta0_) * t * t / (2.0 * horizon_);
      case ScheduleKind::cosine:
        // Quadrature from 0 rather than over [s, t] keeps U(t,s) U(s,r) = U(t,r) exact up to rounding.
        return detail::adaptive_simpson([this](double r) { return base_beta(r); }, 0.0, t, simpson_tolerance);
    }
    return 0.0;
  }

  double base_integral(double s, double t) const {
    if (s == t) return 0.0;
    return base_antiderivative(t) - base_antiderivative(s);
  }

  ScheduleKind kind_;
  double beta0_;
  double beta1_;
  double horizon_;
  bool reversed_;
};

/// Everything needed to evaluate the spectral kernel of the VP-SPDE
///   dX = -beta(t) A X dt + sqrt(beta(t) Q) dW,  A = C^-gamma / 2,  Q = C^(1-gamma),
/// which is stationary at N(0, C).
class ProcessSpec {
 public:
  ProcessSpec(CovarianceSpectrum spectrum, NoiseSchedule schedule, double gamma)
      : spectrum_(std::move(spectrum)), schedule_(schedule), gamma_(gamma) {
    detail::require<ParameterError>(gamma > 0.0 && gamma <= 1.0, "ProcessSpec: gamma must lie in (0, 1]");
    const std::size_t D = spectrum_.dim();
    drift_.resize(D);
    diffusion_.resize(D);
    for (std::size_t j = 0; j < D; ++j) {
      drift_[j] = 0.5 * std::pow(spectrum_[j], -gamma_);
      diffusion_[j] = std::pow(spectrum_[j], 1.0 - gamma_);
    }
  }

  const CovarianceSpectrum& spectrum() const noexcept { return spectrum_; }
  const NoiseSchedule& schedule() const noexcept { return schedule_; }
  double gamma() const noexcept { return gamma_; }
  double horizon() const noexcept { return schedule_.horizon(); }
  std::size_t dim() const noexcept { return spectrum_.dim(); }

  /// a_j = c_j^-gamma / 2 (0-based j).
  double drift_eigenvalue(std::size_t j) const { return drift_[j]; }
  /// q_j = c_j^(1-gamma) (0-based j).
  double diffusion_eigenvalue(std::size_t j) const { return diffusion_[j]; }
  std::span<const double> drift_eigenvalues() const noexcept { return drift_; }
  std::span<const double> diffusion_eigenvalues() const noexcept { return diffusion_; }

  ProcessSpec with_schedule(NoiseSchedule schedule) const { return ProcessSpec(spectrum_, schedule, gamma_); }

 private:
  CovarianceSpectrum spectrum_;
  NoiseSchedule schedule_;
  double gamma_;
  std::vector<double> drift_;
  std::vector<double> diffusion_;
};

inline double beta(const NoiseSchedule& sched, double t) { return sched.beta(t); }

inline double beta_integral(const NoiseSchedule& sched, double s, double t) { return sched.integral(s, t); }

/// log u_j(t, s) = -a_j int_s^t beta.
inline double log_evolution_factor(const ProcessSpec& spec, std::size_t j, double s, double t) {
  detail::require<ShapeError>(j < spec.dim(), "evolution_factor: mode index out of range");
  return -spec.drift_eigenvalue(j) * spec.schedule().integral(s, t);
}

/// u_j(t, s) = exp(-a_j int_s^t beta) for 0-based mode j and s <= t.
inline double evolution_factor(const ProcessSpec& spec, std::size_t j, double s, double t) {
  return std::exp(log_evolution_factor(spec, j, s, t));
}

/// q_j(t, s) = c_j (1 - u_j(t, s)^2), the variance of X_t,j given X_s.
inline double transition_variance(const ProcessSpec& spec, std::size_t j, double s, double t) {
  const double log_u = log_evolution_factor(spec, j, s, t);
  return spec.spectrum()[j] * -std::expm1(2.0 * log_u);
}

/// Per-mode evolution factors and transition variances over [s, t] in one pass.
struct TransitionKernel {
  std::vector<double> factor;
  std::vector<double> variance;
};

inline TransitionKernel transition_kernel(const ProcessSpec& spec, double s, double t) {
  const double I = spec.schedule().integral(s, t);
  TransitionKernel k{std::vector<double>(spec.dim()), std::vector<double>(spec.dim())};
  for (std::size_t j = 0; j < spec.dim(); ++j) {
    const double log_u = -spec.drift_eigenvalue(j) * I;
    k.factor[j] = std::exp(log_u);
    k.variance[j] = spec.spectrum()[j] * -std::expm1(2.0 * log_u);
  }
  return k;
}

}  // namespace doobgen
