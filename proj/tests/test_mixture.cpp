#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "doobgen/mixture.hpp"
#include "doobgen/process.hpp"
#include "mixture_oracle.hpp"
#include "test_support.hpp"

using namespace doobgen;

namespace {

struct Case {
  ProcessSpec spec;
  MixtureTarget target;
};

// Moderate separation: u_j = scale * sqrt(c_j) with alternating sign.
Case make_case(std::size_t D, double alpha, double gamma, double scale, double T = 1.0) {
  const auto c = power_spectrum(D, 1.0, 2.0);
  std::vector<double> u(D);
  for (std::size_t j = 0; j < D; ++j) u[j] = (j % 2 ? -1.0 : 1.0) * scale * std::sqrt(c[j]);
  return {ProcessSpec(c, NoiseSchedule::constant(1.0, T), gamma), MixtureTarget(alpha, u, c)};
}

std::vector<double> draw_state(const CovarianceSpectrum& c, Rng& rng, double inflate = 1.0) {
  auto x = sample_gaussian(c, rng);
  for (auto& v : x) v *= inflate;
  return x;
}

}  // namespace

TEST(Steering, MatchesQuadratureFiniteDifferences) {
  Rng rng(2024);
  int checked = 0;
  for (double gamma : {0.5, 1.0}) {
    for (double alpha : {0.3, 0.5, 0.9}) {
      const auto [spec, target] = make_case(6, alpha, gamma, 0.8);
      for (int n = 0; n < 17; ++n) {
        const double t = rng.uniform(0.0, 0.9);
        const auto x = draw_state(spec.spectrum(), rng, 1.5);
        const auto s = steering(target, spec, t, x);
        const auto fd = oracle::steering_fd(target, spec, t, x);
        EXPECT_LT(oracle::rel_err_vec(s, fd, 1e-8), 1e-5) << "gamma=" << gamma << " alpha=" << alpha << " t=" << t;
        ++checked;
      }
    }
  }
  EXPECT_GE(checked, 100);
}

TEST(Steering, LogHMatchesQuadrature) {
  const auto [spec, target] = make_case(4, 0.3, 0.5, 1.2);
  Rng rng(3);
  for (int n = 0; n < 20; ++n) {
    const double t = rng.uniform(0.0, 0.95);
    const auto x = draw_state(spec.spectrum(), rng);
    EXPECT_NEAR(log_h_value(target, spec, t, x), oracle::log_h_quadrature(target, spec, t, x), 1e-9);
  }
}

TEST(InitialScore, MatchesQuadratureAtTimeZero) {
  const auto [spec, target] = make_case(8, 0.2, 1.0, 0.6);
  Rng rng(8);
  for (int n = 0; n < 10; ++n) {
    const auto x = draw_state(spec.spectrum(), rng);
    EXPECT_LT(oracle::rel_err_vec(initial_score(target, spec, x), oracle::steering_fd(target, spec, 0.0, x), 1e-8),
              1e-5);
  }
}

TEST(Steering, SingleGaussianLimit) {
  const auto [spec, target] = make_case(5, 1.0, 0.5, 1.0);
  Rng rng(4);
  for (int n = 0; n < 10; ++n) {
    const double t = rng.uniform(0.0, 0.9);
    const auto x = draw_state(spec.spectrum(), rng);
    const auto s = steering(target, spec, t, x);
    for (std::size_t j = 0; j < spec.dim(); ++j) {
      const double m = evolution_factor(spec, j, t, 1.0);
      EXPECT_NEAR(s[j], target.mean()[j] * m / spec.spectrum()[j], 1e-12 * std::abs(s[j]) + 1e-300);
    }
  }
}

TEST(Steering, ZeroMeanGivesTrivialH) {
  const auto c = matern_spectrum(8, 1000.0, 0.005, 1.0);
  const ProcessSpec spec(c, NoiseSchedule::constant(10.0, 1.0), 0.5);
  const MixtureTarget target(0.3, std::vector<double>(8, 0.0), c);
  Rng rng(1);
  const auto x = sample_gaussian(c, rng);
  EXPECT_NEAR(log_h_value(target, spec, 0.4, x), 0.0, 1e-15);
  for (double v : steering(target, spec, 0.4, x)) EXPECT_EQ(v, 0.0);
}

TEST(Steering, SymmetricWeightsGiveOddSteering) {
  const auto [spec, target] = make_case(6, 0.5, 0.5, 1.0);
  Rng rng(6);
  for (int n = 0; n < 10; ++n) {
    auto x = draw_state(spec.spectrum(), rng);
    const auto s = steering(target, spec, 0.3, x);
    for (auto& v : x) v = -v;
    const auto s_neg = steering(target, spec, 0.3, x);
    for (std::size_t j = 0; j < s.size(); ++j) EXPECT_DOUBLE_EQ(s_neg[j], -s[j]);
  }
}

TEST(Steering, StableForLargeStates) {
  const auto c = matern_spectrum(16, 1000.0, 0.005, 1.0);
  const ProcessSpec spec(c, NoiseSchedule::linear(0.1, 20.0, 0.2, true), 0.5);
  const MixtureTarget target(0.1, benchmark_mean(16), c);
  Rng rng(10);
  for (double inflate : {1.0, 1e3, 1e6}) {
    const auto x = draw_state(c, rng, inflate);
    for (double t : {0.0, 0.1, 0.199}) {
      const auto s = steering(target, spec, t, x);
      for (double v : s) EXPECT_TRUE(std::isfinite(v));
      EXPECT_TRUE(std::isfinite(log_h_value(target, spec, t, x)));
      // |tanh| <= 1 bounds the steering by |u_j m_j| / c_j.
      for (std::size_t j = 0; j < s.size(); ++j) {
        EXPECT_LE(std::abs(s[j]), std::abs(target.mean()[j]) / c[j] * (1.0 + 1e-12));
      }
    }
  }
}

TEST(Steering, TimeAtOrPastHorizonIsDomainError) {
  const auto [spec, target] = make_case(3, 0.5, 1.0, 1.0);
  const std::vector<double> x(3, 0.0);
  EXPECT_THROW(steering(target, spec, 1.0, x), DomainError);
  EXPECT_THROW(steering(target, spec, -0.1, x), DomainError);
  EXPECT_THROW(log_h_value(target, spec, 1.5, x), DomainError);
}

TEST(Steering, MismatchedCovarianceRejected) {
  const auto c = power_spectrum(3, 1.0, 2.0);
  const ProcessSpec spec(c, NoiseSchedule::constant(1.0, 1.0), 1.0);
  const MixtureTarget target(0.5, std::vector<double>(3, 0.1), power_spectrum(3, 2.0, 2.0));
  EXPECT_THROW(steering(target, spec, 0.0, std::vector<double>(3, 0.0)), ParameterError);
  EXPECT_THROW(steering(target, spec, 0.0, std::vector<double>(2, 0.0)), ShapeError);
}

TEST(MixtureTarget, RejectsInvalidParameters) {
  const auto c = power_spectrum(3, 1.0, 2.0);
  EXPECT_THROW(MixtureTarget(0.0, std::vector<double>(3, 0.0), c), ParameterError);
  EXPECT_THROW(MixtureTarget(1.2, std::vector<double>(3, 0.0), c), ParameterError);
  EXPECT_THROW(MixtureTarget(0.5, std::vector<double>(2, 0.0), c), ShapeError);
}

TEST(HFunction, UnitExpectationUnderReference) {
  // X_t ~ N(0, C) at every t under the stationary reference, so E h(t, X_t) = 1.
  const auto [spec, target] = make_case(4, 0.25, 0.5, 0.7);
  for (double t : {0.0, 0.5, 0.9}) {
    Rng rng(static_cast<Seed>(100 + 10 * t));
    std::vector<double> h;
    for (int n = 0; n < 100000; ++n) h.push_back(h_value(target, spec, t, sample_gaussian(spec.spectrum(), rng)));
    EXPECT_NEAR(oracle::mean(h), 1.0, 4.0 * oracle::standard_error(h)) << "t=" << t;
  }
}

TEST(HFunction, SpaceTimeHarmonic) {
  // h(s, x) = E[h(t, X_t) | X_s = x] for s < t.
  const auto [spec, target] = make_case(4, 0.4, 1.0, 0.8);
  Rng rng(21);
  for (int trial = 0; trial < 3; ++trial) {
    const auto x = draw_state(spec.spectrum(), rng);
    const double s = 0.1, t = 0.6;
    std::vector<double> h;
    for (int n = 0; n < 50000; ++n) h.push_back(h_value(target, spec, t, transition_sample(spec, x, s, t, rng)));
    EXPECT_NEAR(oracle::mean(h), h_value(target, spec, s, x), 4.0 * oracle::standard_error(h));
  }
}

TEST(SampleTarget, ModeFrequencyAndSpread) {
  const auto c = power_spectrum(3, 1.0, 2.0);
  const MixtureTarget target(0.2, {3.0, 0.0, 0.0}, c);
  const auto X = sample_target(target, 20000, 5);
  int plus = 0;
  std::vector<double> second;
  for (std::size_t i = 0; i < X.rows(); ++i) {
    if (X(i, 0) > 0.0) ++plus;
    second.push_back(X(i, 1));
  }
  const double frac = plus / 20000.0;
  EXPECT_NEAR(frac, 0.2, 4.0 * std::sqrt(0.2 * 0.8 / 20000));
  EXPECT_NEAR(oracle::variance(second), 0.25, 0.25 * 4.0 * std::sqrt(2.0 / 20000));
  // Same seed, same rows.
  EXPECT_TRUE(sample_target(target, 20000, 5) == X);
}

TEST(BenchmarkMean, LeadingCoefficients) {
  // sqrt(2) int_0^1 u(xi) sin(j pi xi) dxi by adaptive quadrature (scipy.integrate.quad).
  const auto u = benchmark_mean(4);
  const double expected[4] = {2.725726065218395, -1.5752940757601488, 0.9062113672985878, -0.7346629403430396};
  for (int j = 0; j < 4; ++j) EXPECT_NEAR(u[j], expected[j], 2e-4 * std::abs(expected[j])) << j;
}
