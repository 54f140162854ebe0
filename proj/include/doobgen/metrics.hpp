#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "doobgen/error.hpp"
#include "doobgen/matrix.hpp"
#include "doobgen/mixture.hpp"
#include "doobgen/process.hpp"
#include "doobgen/random.hpp"
#include "doobgen/steering.hpp"

namespace doobgen {

struct SWConfig {
  std::size_t slices = 128;
  int order = 2;
  Seed seed = 0;

  void validate() const {
    detail::require<ParameterError>(slices >= 1, "SWConfig: need at least one slice");
    detail::require<ParameterError>(order == 1 || order == 2, "SWConfig: order must be 1 or 2");
  }
};

/// A Monte-Carlo estimate and its standard error.
struct Estimate {
  double value = 0.0;
  double standard_error = 0.0;
};

/// Unit directions for the slices, drawn by normalising Gaussian vectors.
inline Matrix slice_directions(std::size_t D, const SWConfig& cfg) {
  cfg.validate();
  Matrix dirs(cfg.slices, D);
  Rng rng(cfg.seed);
  for (std::size_t s = 0; s < cfg.slices; ++s) {
    double norm = 0.0;
    do {
      norm = 0.0;
      for (std::size_t j = 0; j < D; ++j) {
        dirs(s, j) = rng.normal();
        norm += dirs(s, j) * dirs(s, j);
      }
    } while (norm == 0.0);
    norm = std::sqrt(norm);
    for (std::size_t j = 0; j < D; ++j) dirs(s, j) /= norm;
  }
  return dirs;
}

/// Order-p Wasserstein distance between two 1-D empirical measures with
/// uniform weights. Sorts its arguments in place.
inline double wasserstein_1d(std::vector<double>& a, std::vector<double>& b, int p) {
  detail::require<InputError>(!a.empty() && !b.empty(), "wasserstein_1d: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  auto cost = [p](double d) { return p == 1 ? std::abs(d) : d * d; };
  double total = 0.0;
  if (a.size() == b.size()) {
    for (std::size_t i = 0; i < a.size(); ++i) total += cost(a[i] - b[i]);
    total /= static_cast<double>(a.size());
  } else {
    // Quantile coupling: walk the merged breakpoints of both CDFs.
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double level = 0.0;
    while (i < a.size() && j < b.size()) {
      const double next_a = static_cast<double>(i + 1) / na, next_b = static_cast<double>(j + 1) / nb;
      const double next = std::min(next_a, next_b);
      total += (next - level) * cost(a[i] - b[j]);
      level = next;
      if (next_a <= next) ++i;
      if (next_b <= next) ++j;
    }
  }
  return p == 1 ? total : std::sqrt(total);
}

/// Average over random slices of the 1-D order-p Wasserstein distance between projections.
inline double sliced_wasserstein(const Matrix& A, const Matrix& B, const SWConfig& cfg = {}) {
  detail::require<InputError>(A.rows() > 0 && B.rows() > 0, "sliced_wasserstein: empty sample set");
  if (A.cols() != B.cols()) {
    throw InputError("sliced_wasserstein: dimension mismatch (" + std::to_string(A.cols()) + " vs " +
                     std::to_string(B.cols()) + ")");
  }
  const Matrix dirs = slice_directions(A.cols(), cfg);
  std::vector<double> pa(A.rows()), pb(B.rows());
  double sum = 0.0;
  for (std::size_t s = 0; s < cfg.slices; ++s) {
    const auto theta = dirs.row(s);
    for (std::size_t i = 0; i < A.rows(); ++i) {
      const auto x = A.row(i);
      double v = 0.0;
      for (std::size_t j = 0; j < x.size(); ++j) v += theta[j] * x[j];
      pa[i] = v;
    }
    for (std::size_t i = 0; i < B.rows(); ++i) {
      const auto x = B.row(i);
      double v = 0.0;
      for (std::size_t j = 0; j < x.size(); ++j) v += theta[j] * x[j];
      pb[i] = v;
    }
    sum += wasserstein_1d(pa, pb, cfg.order);
  }
  return sum / static_cast<double>(cfg.slices);
}

/// Draws n bridge-disintegrated points (t, X_t) under the h-transformed law:
/// y ~ target, t ~ U(0, T - margin), X_t | X_T = y.
struct BridgeSet {
  std::vector<double> times;
  Matrix states;
  Matrix endpoints;
};

inline BridgeSet sample_bridge_set(const MixtureTarget& target, const ProcessSpec& spec, std::size_t n, Seed seed,
                                   double margin = 1e-4) {
  detail::require<ParameterError>(margin > 0.0 && margin < spec.horizon(), "bridge set: invalid time margin");
  BridgeSet set{std::vector<double>(n), Matrix(n, spec.dim()), Matrix(n, spec.dim())};
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, i));
    const auto y = sample_target(target, rng);
    const double t = rng.uniform(0.0, spec.horizon() - margin);
    const auto p = bridge_sample(spec, y, t, rng);
    set.times[i] = t;
    set.states.set_row(i, p.x);
    set.endpoints.set_row(i, y);
  }
  return set;
}

/// E || s_theta(t, X_t) - s(t, X_t) ||^2 over bridge-disintegrated (t, X_t).
inline Estimate score_error(const MixtureTarget& target, const SteeringSource& model, const ProcessSpec& spec,
                            std::size_t n, Seed seed, double margin = 1e-4) {
  detail::require<InputError>(n >= 2, "score_error: need at least two points");
  detail::require<ShapeError>(model.dim() == spec.dim(), "score_error: model/process dimension mismatch");
  const auto set = sample_bridge_set(target, spec, n, seed, margin);
  const Matrix fitted = model.evaluate(set.times, set.states);
  std::vector<double> err(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto s = steering(target, spec, set.times[i], set.states.row(i));
    double e = 0.0;
    for (std::size_t j = 0; j < s.size(); ++j) {
      const double d = fitted(i, j) - s[j];
      e += d * d;
    }
    err[i] = e;
  }
  double mean = 0.0;
  for (double e : err) mean += e;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double e : err) var += (e - mean) * (e - mean);
  var /= static_cast<double>(n - 1);
  return {mean, std::sqrt(var / static_cast<double>(n))};
}

/// Mean and standard error of the mean; the error is NaN for a single value.
inline Estimate summarize(std::span<const double> values) {
  detail::require<InputError>(!values.empty(), "summarize: no values");
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  if (values.size() < 2) return {mean, std::numeric_limits<double>::quiet_NaN()};
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  return {mean, std::sqrt(var / (n - 1.0) / n)};
}

struct TargetComparison {
  Estimate sw;        // samples vs a fresh target set
  Estimate baseline;  // two independent target sets of the same size
  std::vector<double> sw_values, baseline_values;  // per repeat
};

/// Sliced Wasserstein between `samples` and fresh target draws, alongside the
/// target-vs-target baseline, averaged over `repeats` independent target sets.
/// Both distances in a repeat share the same slice directions.
inline TargetComparison compare_to_target(const Matrix& samples, const MixtureTarget& target, std::size_t reference_n,
                                          std::size_t repeats, const SWConfig& cfg, Seed seed) {
  detail::require<InputError>(repeats >= 1 && reference_n >= 1, "compare_to_target: need at least one target set");
  std::vector<double> sw(repeats), base(repeats);
  for (std::size_t r = 0; r < repeats; ++r) {
    const Seed root = derive_seed(seed, r);
    const Matrix a = sample_target(target, reference_n, derive_seed(root, 0));
    const Matrix b = sample_target(target, reference_n, derive_seed(root, 1));
    SWConfig slice = cfg;
    slice.seed = derive_seed(root, 2);
    sw[r] = sliced_wasserstein(samples, a, slice);
    base[r] = sliced_wasserstein(a, b, slice);
  }
  return {summarize(sw), summarize(base), sw, base};
}

/// Fraction of rows with <x, u> > 0.
inline double mode_fraction(const Matrix& samples, std::span<const double> u) {
  detail::require<ShapeError>(samples.cols() == u.size(), "mode_fraction: dimension mismatch");
  detail::require<InputError>(samples.rows() > 0, "mode_fraction: no samples");
  double norm = 0.0;
  for (double v : u) norm += v * v;
  if (norm == 0.0) throw DomainError("mode_fraction: undefined for u = 0");
  std::size_t plus = 0;
  for (std::size_t i = 0; i < samples.rows(); ++i) {
    const auto x = samples.row(i);
    double dot = 0.0;
    for (std::size_t j = 0; j < u.size(); ++j) dot += x[j] * u[j];
    if (dot > 0.0) ++plus;
  }
  return static_cast<double>(plus) / static_cast<double>(samples.rows());
}

struct ColumnMoments {
  std::vector<double> mean;
  std::vector<double> variance;
};

inline ColumnMoments column_moments(const Matrix& samples) {
  detail::require<InputError>(samples.rows() >= 2, "column_moments: need at least two rows");
  const std::size_t n = samples.rows(), D = samples.cols();
  ColumnMoments m{std::vector<double>(D, 0.0), std::vector<double>(D, 0.0)};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < D; ++j) m.mean[j] += samples(i, j);
  }
  for (auto& v : m.mean) v /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < D; ++j) {
      const double d = samples(i, j) - m.mean[j];
      m.variance[j] += d * d;
    }
  }
  for (auto& v : m.variance) v /= static_cast<double>(n - 1);
  return m;
}

/// One-sample Kolmogorov-Smirnov statistic of `values` against N(mu, var).
inline double ks_normal_statistic(std::vector<double> values, double mu, double var) {
  detail::require<InputError>(!values.empty(), "ks_normal_statistic: no values");
  detail::require<ParameterError>(var > 0.0, "ks_normal_statistic: variance must be positive");
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  const double sd = std::sqrt(var);
  double d = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double f = 0.5 * std::erfc(-(values[i] - mu) / (sd * std::numbers::sqrt2));
    d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
  }
  return d;
}

/// Asymptotic one-sample KS critical value at significance level alpha.
inline double ks_critical_value(std::size_t n, double alpha) {
  return std::sqrt(-0.5 * std::log(alpha / 2.0) / static_cast<double>(n));
}

}  // namespace doobgen
