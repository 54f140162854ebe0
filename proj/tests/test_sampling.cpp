#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "doobgen/metrics.hpp"
#include "doobgen/sampling.hpp"
#include "test_support.hpp"

using namespace doobgen;

namespace {

ProcessSpec small_spec(std::size_t D = 4, double T = 1.0) {
  return ProcessSpec(power_spectrum(D, 1.0, 2.0), NoiseSchedule::constant(1.0, T), 1.0);
}

MixtureTarget zero_target(const ProcessSpec& spec) {
  return MixtureTarget(0.5, std::vector<double>(spec.dim(), 0.0), spec.spectrum());
}

}  // namespace

TEST(IemStep, SingleStepFormula) {
  const ProcessSpec spec(CovarianceSpectrum({1.0}), NoiseSchedule::constant(1.0, 1.0), 1.0);
  const auto x = iem_step(spec, std::vector<double>{0.0}, 0.0, 0.1, std::vector<double>{1.0}, std::vector<double>{0.0});
  EXPECT_NEAR(x[0], 1.0 / 1.05, 1e-15);
}

TEST(IemStep, ForcingAndNoiseEnterExplicitly) {
  // c = 4, gamma = 1: a = 1/8, q = 1; beta = 2, dt = 0.5.
  const ProcessSpec spec(CovarianceSpectrum({4.0}), NoiseSchedule::constant(2.0, 1.0), 1.0);
  const auto x = iem_step(spec, std::vector<double>{3.0}, 0.25, 0.5, std::vector<double>{1.0}, std::vector<double>{-1.0});
  EXPECT_NEAR(x[0], (1.0 + 1.0 * 3.0 - 1.0) / (1.0 + 0.125), 1e-15);
}

TEST(IemStep, StiffModeStaysBounded) {
  const ProcessSpec spec(CovarianceSpectrum({1.0, 1e-12}), NoiseSchedule::constant(1.0, 1.0), 1.0);
  // a_2 dt beta = 0.5e12 * 0.002 = 1e9
  const std::vector<double> x{5.0, 5.0}, s{0.0, 0.0}, xi{0.0, 0.0};
  const auto y = iem_step(spec, s, 0.0, 0.002, x, xi);
  EXPECT_LT(std::abs(y[1]), 1e-8);
  EXPECT_NEAR(y[0], 5.0 / 1.001, 1e-12);
  EXPECT_THROW(iem_step(spec, s, 0.9, 0.2, x, xi), DomainError);
}

TEST(IemStep, StiffSpectrumNoOverflow) {
  // gamma = 1 and c_j = j^-4: a_j spans twelve orders of magnitude.
  const auto c = power_spectrum(1000, 1.0, 4.0);
  const ProcessSpec spec(c, NoiseSchedule::linear(0.1, 20.0, 1.0, true), 1.0);
  EXPECT_GT(spec.drift_eigenvalue(999) / spec.drift_eigenvalue(0), 1e11);
  const auto res = generate(spec, ZeroSteering(1000), 50, {250, 0, 0.1, 3});
  for (double v : res.samples.data()) EXPECT_TRUE(std::isfinite(v));
}

TEST(Generate, UnforcedChainPreservesStationaryVariance) {
  const auto spec = small_spec(2);
  const auto res = generate(spec, ZeroSteering(2), 20000, {1000, 0, 0.1, 11});
  const auto m = column_moments(res.samples);
  for (std::size_t j = 0; j < 2; ++j) {
    EXPECT_NEAR(m.variance[j], spec.spectrum()[j], 4.0 * spec.spectrum()[j] * std::sqrt(2.0 / 20000));
  }
}

TEST(Generate, ZeroMeanTargetGivesReferenceLaw) {
  const auto spec = small_spec(4);
  const AnalyticSteering steer(zero_target(spec), spec);
  const auto res = generate(spec, steer, 10000, {250, 50, 0.1, 5});
  for (std::size_t j = 0; j < 4; ++j) {
    EXPECT_LT(ks_normal_statistic(res.samples.column(j), 0.0, spec.spectrum()[j]), ks_critical_value(10000, 1e-3))
        << "mode " << j;
  }
}

TEST(Generate, SameSeedIsBitIdentical) {
  const auto spec = small_spec(3);
  std::vector<double> u{0.5, -0.3, 0.1};
  const AnalyticSteering steer(MixtureTarget(0.2, u, spec.spectrum()), spec);
  const SamplerConfig cfg{40, 5, 0.1, 77};
  EXPECT_TRUE(generate(spec, steer, 64, cfg).samples == generate(spec, steer, 64, cfg).samples);
  auto other = cfg;
  other.seed = 78;
  EXPECT_FALSE(generate(spec, steer, 64, cfg).samples == generate(spec, steer, 64, other).samples);
}

TEST(Generate, EqualsChainedIemSteps) {
  const auto spec = small_spec(3);
  const MixtureTarget target(0.3, {0.4, 0.2, -0.1}, spec.spectrum());
  const AnalyticSteering steer(target, spec);
  const SamplerConfig cfg{20, 0, 0.1, 4};
  const auto res = generate(spec, steer, 3, cfg);
  for (std::size_t i = 0; i < 3; ++i) {
    Rng rng(derive_seed(4, i));
    auto x = sample_gaussian(spec.spectrum(), rng);
    for (std::size_t k = 0; k < 20; ++k) {
      const double t = k / 20.0;
      x = iem_step(spec, steering(target, spec, t, x), t, 0.05, x, rng);
    }
    for (std::size_t j = 0; j < 3; ++j) EXPECT_DOUBLE_EQ(res.samples(i, j), x[j]);
  }
}

TEST(Generate, DimensionMismatchIsConfigError) {
  EXPECT_THROW(generate(small_spec(4), ZeroSteering(3), 10, {}), ConfigError);
}

TEST(LangevinInit, ZeroStepsReturnsReferenceDraws) {
  const auto spec = small_spec(3);
  const auto X = langevin_init(ZeroSteering(3), spec, 5, 0, 0.1, 9);
  for (std::size_t i = 0; i < 5; ++i) {
    Rng rng(derive_seed(9, i));
    const auto x = sample_gaussian(spec.spectrum(), rng);
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(X(i, j), x[j]);
  }
}

TEST(LangevinInit, TrivialHKeepsReferenceVariance) {
  const auto spec = small_spec(3);
  const AnalyticSteering steer(zero_target(spec), spec);
  for (std::size_t L : {1u, 50u}) {
    const auto m = column_moments(langevin_init(steer, spec, 20000, L, 0.1, 3));
    for (std::size_t j = 0; j < 3; ++j) {
      EXPECT_NEAR(m.variance[j], spec.spectrum()[j], 4.0 * spec.spectrum()[j] * std::sqrt(2.0 / 20000)) << L;
    }
  }
}

namespace {

struct IsEstimate {
  double p;
  double se;
};

// Self-normalised importance sampling of P(<x, u> > 0) under h(0, x) N(0, C)(dx).
IsEstimate mode_weight_oracle(const MixtureTarget& target, const ProcessSpec& spec, std::size_t n, Seed seed) {
  Rng rng(seed);
  std::vector<double> w(n), ind(n);
  double sw = 0.0, swi = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = sample_gaussian(spec.spectrum(), rng);
    w[i] = h_value(target, spec, 0.0, x);
    double dot = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) dot += x[j] * target.mean()[j];
    ind[i] = dot > 0.0 ? 1.0 : 0.0;
    sw += w[i];
    swi += w[i] * ind[i];
  }
  const double p = swi / sw;
  double var = 0.0;
  for (std::size_t i = 0; i < n; ++i) var += w[i] * w[i] * (ind[i] - p) * (ind[i] - p);
  return {p, std::sqrt(var) / sw};
}

}  // namespace

TEST(LangevinInit, BenchmarkMatchesImportanceSamplingOracle) {
  const std::size_t D = 16;
  const ProcessSpec spec(matern_spectrum(D, 1000.0, 0.005, 1.0), NoiseSchedule::linear(0.1, 20.0, 0.2, true), 0.5);
  const MixtureTarget target(0.1, benchmark_mean(D), spec.spectrum());
  const auto is = mode_weight_oracle(target, spec, 100000, 1234);
  const std::size_t n = 10000;
  const double p = mode_fraction(langevin_init(AnalyticSteering(target, spec), spec, n, 50, 0.1, 77), target.mean());
  EXPECT_NEAR(p, is.p, 4.0 * std::hypot(is.se, std::sqrt(p * (1.0 - p) / n)));
}

TEST(LangevinInit, ConvergesToTiltedInitialLaw) {
  // h(0, .) is far from constant here: m_1(T, 0) = exp(-1/2).
  const std::size_t D = 16;
  const auto c = power_spectrum(D, 1.0, 2.0);
  const ProcessSpec spec(c, NoiseSchedule::constant(1.0, 1.0), 1.0);
  std::vector<double> u(D);
  for (std::size_t j = 0; j < D; ++j) u[j] = 1.2 * std::sqrt(c[j]) / static_cast<double>(j + 1);
  const MixtureTarget target(0.1, u, c);
  const auto is = mode_weight_oracle(target, spec, 100000, 1234);
  ASSERT_LT(is.p, 0.4);  // the statistic actually moves away from 1/2

  const std::size_t n = 10000;
  const AnalyticSteering steer(target, spec);
  double prev_err = 1.0;
  for (std::size_t L : {0u, 10u, 50u, 200u}) {
    const double p = mode_fraction(langevin_init(steer, spec, n, L, 0.1, 77), u);
    const double se = std::hypot(is.se, std::sqrt(p * (1.0 - p) / n));
    const double err = std::abs(p - is.p);
    EXPECT_LE(err, prev_err + 2.0 * se) << "L=" << L;
    prev_err = err;
    if (L == 200) EXPECT_LT(err, 4.0 * se) << "IS " << is.p << " Langevin " << p;
  }
}
