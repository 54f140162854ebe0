#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "doobgen/error.hpp"
#include "doobgen/random.hpp"

namespace doobgen {

/// Coefficients <x, e_j> of a field in the sine basis, j = 1..D (stored 0-based).
using FieldCoefficients = std::vector<double>;

/// Values of a field on the nodes of a BasisGrid.
using FieldValues = std::vector<double>;

/// Eigenvalues c_1 >= c_2 >= ... > 0 of a diagonal covariance operator C.
class CovarianceSpectrum {
 public:
  explicit CovarianceSpectrum(std::vector<double> eigenvalues) : c_(std::move(eigenvalues)) {
    detail::require<ParameterError>(!c_.empty(), "CovarianceSpectrum: empty spectrum");
    for (double v : c_) {
      detail::require<ParameterError>(std::isfinite(v) && v > 0.0,
                                      "CovarianceSpectrum: eigenvalues must be finite and positive");
    }
  }

  std::size_t dim() const noexcept { return c_.size(); }
  double operator[](std::size_t j) const { return c_[j]; }
  std::span<const double> values() const noexcept { return c_; }

  double trace() const {
    double s = 0.0;
    for (double v : c_) s += v;
    return s;
  }

  double max() const { return *std::max_element(c_.begin(), c_.end()); }

  bool non_increasing() const {
    return std::is_sorted(c_.rbegin(), c_.rend());
  }

 private:
  std::vector<double> c_;
};

/// Matérn spectrum c_j = sigma0^2 (rho0^-2 + (2 pi j)^2)^-(1/2 + nu0).
inline CovarianceSpectrum matern_spectrum(std::size_t D, double sigma0_sq, double rho0, double nu0) {
  detail::require<ParameterError>(D >= 1, "matern_spectrum: D must be >= 1");
  detail::require<ParameterError>(sigma0_sq > 0.0 && rho0 > 0.0 && nu0 > 0.0,
                                  "matern_spectrum: sigma0_sq, rho0 and nu0 must be positive");
  const double exponent = -(0.5 + nu0);
  const double inv_rho_sq = 1.0 / (rho0 * rho0);
  std::vector<double> c(D);
  for (std::size_t j = 1; j <= D; ++j) {
    const double w = 2.0 * std::numbers::pi * static_cast<double>(j);
    c[j - 1] = sigma0_sq * std::pow(inv_rho_sq + w * w, exponent);
  }
  return CovarianceSpectrum(std::move(c));
}

/// Power-law spectrum c_j = c1 * j^-decay; decay must exceed 1 so the trace stays finite.
inline CovarianceSpectrum power_spectrum(std::size_t D, double c1, double decay) {
  detail::require<ParameterError>(D >= 1, "power_spectrum: D must be >= 1");
  detail::require<ParameterError>(c1 > 0.0, "power_spectrum: c1 must be positive");
  detail::require<ParameterError>(decay > 1.0, "power_spectrum: decay must be > 1 (trace class)");
  std::vector<double> c(D);
  for (std::size_t j = 1; j <= D; ++j) c[j - 1] = c1 * std::pow(static_cast<double>(j), -decay);
  return CovarianceSpectrum(std::move(c));
}

/// Coefficient-wise draw x_j ~ N(0, c_j).
inline FieldCoefficients sample_gaussian(const CovarianceSpectrum& spec, Rng& rng) {
  FieldCoefficients x(spec.dim());
  for (std::size_t j = 0; j < spec.dim(); ++j) x[j] = std::sqrt(spec[j]) * rng.normal();
  return x;
}

inline FieldCoefficients sample_gaussian(const CovarianceSpectrum& spec, Seed seed) {
  Rng rng(seed);
  return sample_gaussian(spec, rng);
}

/// Uniform closed grid xi_m = m / (M - 1) on [0, 1] carrying the first D modes of
/// the orthonormal basis e_j(xi) = sqrt(2) sin(j pi xi). Integrals use the
/// composite trapezoid rule.
class BasisGrid {
 public:
  static constexpr std::size_t default_points(std::size_t D) { return std::max<std::size_t>(256, 8 * D); }

  explicit BasisGrid(std::size_t D) : BasisGrid(D, default_points(D)) {}

  BasisGrid(std::size_t D, std::size_t M) : D_(D), M_(M), nodes_(M), weights_(M) {
    detail::require<ParameterError>(D >= 1, "BasisGrid: D must be >= 1");
    detail::require<ParameterError>(M >= 2, "BasisGrid: need at least two grid points");
    const double h = 1.0 / static_cast<double>(M - 1);
    for (std::size_t m = 0; m < M; ++m) {
      nodes_[m] = static_cast<double>(m) * h;
      weights_[m] = (m == 0 || m == M - 1) ? 0.5 * h : h;
    }
  }

  std::size_t modes() const noexcept { return D_; }
  std::size_t points() const noexcept { return M_; }
  std::span<const double> nodes() const noexcept { return nodes_; }
  std::span<const double> weights() const noexcept { return weights_; }

  /// e_j(xi) for 1-based mode index j.
  static double basis(std::size_t j, double xi) {
    return std::numbers::sqrt2 * std::sin(static_cast<double>(j) * std::numbers::pi * xi);
  }

  /// Trapezoidal integral of f over [0, 1].
  double integrate(std::span<const double> f) const {
    detail::require<ShapeError>(f.size() == M_, "BasisGrid::integrate: field size mismatch");
    double s = 0.0;
    for (std::size_t m = 0; m < M_; ++m) s += weights_[m] * f[m];
    return s;
  }

 private:
  std::size_t D_;
  std::size_t M_;
  std::vector<double> nodes_;
  std::vector<double> weights_;
};

/// Synthesis f(xi_m) = sum_j x_j e_j(xi_m).
inline FieldValues coeffs_to_field(std::span<const double> x, const BasisGrid& grid) {
  detail::require<ShapeError>(x.size() == grid.modes(),
                              "coeffs_to_field: expected " + std::to_string(grid.modes()) +
                                  " coefficients, got " + std::to_string(x.size()));
  FieldValues f(grid.points(), 0.0);
  const auto nodes = grid.nodes();
  for (std::size_t m = 0; m < grid.points(); ++m) {
    double s = 0.0;
    for (std::size_t j = 1; j <= x.size(); ++j) s += x[j - 1] * BasisGrid::basis(j, nodes[m]);
    f[m] = s;
  }
  return f;
}

/// Analysis x_j = int f(xi) e_j(xi) dxi by the trapezoid rule.
inline FieldCoefficients project_field(std::span<const double> f, const BasisGrid& grid) {
  detail::require<ShapeError>(f.size() == grid.points(), "project_field: field size does not match grid");
  FieldCoefficients x(grid.modes(), 0.0);
  const auto nodes = grid.nodes();
  const auto w = grid.weights();
  for (std::size_t j = 1; j <= grid.modes(); ++j) {
    double s = 0.0;
    for (std::size_t m = 0; m < grid.points(); ++m) s += w[m] * f[m] * BasisGrid::basis(j, nodes[m]);
    x[j - 1] = s;
  }
  return x;
}

/// Tabulates a scalar function on the grid nodes.
template <typename F>
FieldValues tabulate(F&& fn, const BasisGrid& grid) {
  FieldValues f(grid.points());
  const auto nodes = grid.nodes();
  for (std::size_t m = 0; m < grid.points(); ++m) f[m] = fn(nodes[m]);
  return f;
}

}  // namespace doobgen
