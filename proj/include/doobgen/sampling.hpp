#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "doobgen/error.hpp"
#include "doobgen/matrix.hpp"
#include "doobgen/random.hpp"
#include "doobgen/schedule.hpp"
#include "doobgen/spectral.hpp"
#include "doobgen/steering.hpp"

namespace doobgen {

struct SamplerConfig {
  std::size_t steps = 250;           // K, IEM steps on a uniform grid over [0, T]
  std::size_t langevin_steps = 50;   // L
  double langevin_step_size = 0.1;   // delta
  Seed seed = 0;

  void validate() const {
    detail::require<ParameterError>(steps >= 1, "SamplerConfig: need at least one IEM step");
    detail::require<ParameterError>(langevin_step_size > 0.0 && std::isfinite(langevin_step_size),
                                    "SamplerConfig: Langevin step size must be positive");
  }
};

struct GenerationResult {
  Matrix samples;
  double init_seconds = 0.0;
  double integrate_seconds = 0.0;
  SamplerConfig config;
};

namespace detail {

inline std::vector<Rng> trajectory_rngs(std::size_t n, Seed seed) {
  std::vector<Rng> rngs;
  rngs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) rngs.emplace_back(derive_seed(seed, i));
  return rngs;
}

inline double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

/// Preconditioned unadjusted Langevin on rows of `x`, one generator per row.
inline void langevin_run(const SteeringSource& steer, const ProcessSpec& spec, Matrix& x, std::size_t L,
                         double delta, std::vector<Rng>& rngs) {
  const std::size_t D = spec.dim();
  std::vector<double> noise_sd(D);
  for (std::size_t j = 0; j < D; ++j) noise_sd[j] = std::sqrt(delta * spec.spectrum()[j]);
  for (std::size_t l = 0; l < L; ++l) {
    const Matrix s = steer.evaluate(0.0, x);
    for (std::size_t i = 0; i < x.rows(); ++i) {
      for (std::size_t j = 0; j < D; ++j) {
        // x + (delta/2) C (-C^-1 x + s) + sqrt(delta) C^(1/2) xi
        x(i, j) += 0.5 * delta * (spec.spectrum()[j] * s(i, j) - x(i, j)) + noise_sd[j] * rngs[i].normal();
      }
    }
  }
}

}  // namespace detail

/// n draws targeting h(0, x) N(0, C)(dx): reference draws followed by L Langevin steps.
inline Matrix langevin_init(const SteeringSource& steer, const ProcessSpec& spec, std::size_t n, std::size_t L,
                            double delta, Seed seed) {
  detail::require<ParameterError>(delta > 0.0, "langevin_init: step size must be positive");
  detail::require<ShapeError>(steer.dim() == spec.dim(), "langevin_init: steering/process dimension mismatch");
  auto rngs = detail::trajectory_rngs(n, seed);
  Matrix x(n, spec.dim());
  for (std::size_t i = 0; i < n; ++i) x.set_row(i, sample_gaussian(spec.spectrum(), rngs[i]));
  detail::langevin_run(steer, spec, x, L, delta, rngs);
  return x;
}

/// One semi-implicit Euler step with the standard normal increments supplied:
///   x'_j = [x_j + dt b q_j s_j + sqrt(dt b q_j) xi_j] / (1 + dt b a_j),  b = beta(t_k).
inline FieldCoefficients iem_step(const ProcessSpec& spec, std::span<const double> s, double t_k, double dt,
                                  std::span<const double> x, std::span<const double> xi) {
  detail::require<ShapeError>(x.size() == spec.dim() && s.size() == spec.dim() && xi.size() == spec.dim(),
                              "iem_step: dimension mismatch");
  detail::require<DomainError>(dt > 0.0 && t_k >= 0.0 && t_k + dt <= spec.horizon() * (1.0 + 1e-12),
                               "iem_step: step leaves [0, T]");
  const double b = spec.schedule().beta(t_k);
  FieldCoefficients out(spec.dim());
  for (std::size_t j = 0; j < spec.dim(); ++j) {
    const double bq = dt * b * spec.diffusion_eigenvalue(j);
    out[j] = (x[j] + bq * s[j] + std::sqrt(bq) * xi[j]) / (1.0 + dt * b * spec.drift_eigenvalue(j));
  }
  return out;
}

inline FieldCoefficients iem_step(const ProcessSpec& spec, std::span<const double> s, double t_k, double dt,
                                  std::span<const double> x, Rng& rng) {
  std::vector<double> xi(spec.dim());
  for (auto& v : xi) v = rng.normal();
  return iem_step(spec, s, t_k, dt, x, xi);
}

/// Langevin initialisation then K IEM steps of the forced process from 0 to T.
/// Trajectory i draws all of its randomness from derive_seed(seed, i); steering
/// is evaluated for all trajectories at once.
inline GenerationResult generate(const ProcessSpec& spec, const SteeringSource& steer, std::size_t n,
                                 const SamplerConfig& cfg) {
  cfg.validate();
  if (steer.dim() != spec.dim()) {
    throw ConfigError("generate: steering dimension " + std::to_string(steer.dim()) + " does not match process dimension " +
                      std::to_string(spec.dim()));
  }
  GenerationResult res{Matrix(n, spec.dim()), 0.0, 0.0, cfg};
  auto rngs = detail::trajectory_rngs(n, cfg.seed);

  auto start = std::chrono::steady_clock::now();
  Matrix& x = res.samples;
  for (std::size_t i = 0; i < n; ++i) x.set_row(i, sample_gaussian(spec.spectrum(), rngs[i]));
  detail::langevin_run(steer, spec, x, cfg.langevin_steps, cfg.langevin_step_size, rngs);
  res.init_seconds = detail::seconds_since(start);

  start = std::chrono::steady_clock::now();
  const double T = spec.horizon();
  const double dt = T / static_cast<double>(cfg.steps);
  const std::size_t D = spec.dim();
  std::vector<double> a(D), q(D);
  for (std::size_t j = 0; j < D; ++j) {
    a[j] = spec.drift_eigenvalue(j);
    q[j] = spec.diffusion_eigenvalue(j);
  }
  for (std::size_t k = 0; k < cfg.steps; ++k) {
    const double t = T * static_cast<double>(k) / static_cast<double>(cfg.steps);
    const double b = spec.schedule().beta(t);
    const Matrix s = steer.evaluate(t, x);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < D; ++j) {
        const double bq = dt * b * q[j];
        x(i, j) = (x(i, j) + bq * s(i, j) + std::sqrt(bq) * rngs[i].normal()) / (1.0 + dt * b * a[j]);
      }
    }
  }
  res.integrate_seconds = detail::seconds_since(start);
  for (double v : x.data()) {
    if (!std::isfinite(v)) throw NumericError("generate: non-finite sample");
  }
  return res;
}

}  // namespace doobgen
