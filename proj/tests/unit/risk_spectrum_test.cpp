#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "oracles.hpp"
#include "qrsrm/risk_spectrum.hpp"

using namespace qrsrm;

namespace {

RiskSpectrum example1_spectrum() { return RiskSpectrum::wscvar({{0.4, 0.7}, {0.8, 0.3}}); }

RiskSpectrum random_spectrum(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  switch (rng() % 4) {
    case 0:
      return RiskSpectrum::cvar(0.01 + 0.99 * u(rng));
    case 1: {
      const double w = u(rng);
      return RiskSpectrum::wscvar({{0.01 + 0.99 * u(rng), w}, {0.01 + 0.99 * u(rng), 1.0 - w}});
    }
    case 2:
      return RiskSpectrum::erm(0.1 + 20.0 * u(rng));
    default:
      return RiskSpectrum::dual_power(1.0 + 8.0 * u(rng));
  }
}

}  // namespace

TEST(Phi, Examples) {
  EXPECT_EQ(RiskSpectrum::cvar(0.5).phi(0.25), 2.0);
  EXPECT_EQ(RiskSpectrum::cvar(0.5).phi(0.75), 0.0);
  EXPECT_EQ(RiskSpectrum::cvar(0.5).phi(0.5), 2.0);  // left-continuous at the jump
  EXPECT_DOUBLE_EQ(RiskSpectrum::dual_power(4.0).phi(0.5), 0.5);
  EXPECT_THROW(RiskSpectrum::cvar(0.5).phi(1.5), std::domain_error);
  EXPECT_THROW(RiskSpectrum::cvar(0.5).phi(-0.1), std::domain_error);
}

TEST(Phi, NonIncreasingAndUnitIntegral) {
  for (const auto& s : {RiskSpectrum::cvar(0.3), example1_spectrum(), RiskSpectrum::erm(12.0),
                        RiskSpectrum::erm(0.5), RiskSpectrum::dual_power(4.0),
                        RiskSpectrum::dual_power(1.0)}) {
    const int n = 1000000;
    double integral = 0.0;
    double prev = s.phi(0.0);
    for (int k = 0; k < n; ++k) {
      const double u = (k + 0.5) / n;
      const double v = s.phi(u);
      EXPECT_LE(v, prev + 1e-12);
      prev = v;
      integral += v / n;
    }
    EXPECT_NEAR(integral, 1.0, 1e-6) << s.to_string();
    EXPECT_NEAR(s.phi_integral(0.0, 1.0), 1.0, 1e-12) << s.to_string();
  }
}

TEST(Spectrum, ParseRoundTrip) {
  for (const char* text : {"cvar:0.5", "wscvar:0.1,1@0.8,0.2", "erm:12", "dprm:4"}) {
    const auto s = RiskSpectrum::parse(text);
    EXPECT_EQ(s.to_string(), text);
  }
  EXPECT_EQ(RiskSpectrum::parse("mean").family(), SpectrumFamily::CVaR);
  EXPECT_EQ(RiskSpectrum::parse("mean").parameter(), 1.0);
}

TEST(Spectrum, RejectsInvalid) {
  EXPECT_THROW(RiskSpectrum::cvar(0.0), std::invalid_argument);
  EXPECT_THROW(RiskSpectrum::cvar(1.1), std::invalid_argument);
  EXPECT_THROW(RiskSpectrum::erm(0.0), std::invalid_argument);
  EXPECT_THROW(RiskSpectrum::dual_power(0.5), std::invalid_argument);
  EXPECT_THROW(RiskSpectrum::wscvar({{0.5, 0.5}, {0.8, 0.4}}), std::invalid_argument);
  EXPECT_THROW(RiskSpectrum::parse("cvar"), std::invalid_argument);
  EXPECT_THROW(RiskSpectrum::parse("var:0.1"), std::invalid_argument);
  EXPECT_THROW(RiskSpectrum::parse("wscvar:0.1,0.2@1"), std::invalid_argument);
  EXPECT_THROW(RiskSpectrum::parse("cvar:0.1x"), std::invalid_argument);
}

TEST(QuantileWeights, ExpectationPutsAllWeightLast) {
  for (std::size_t n : {1u, 4u, 50u}) {
    const auto w = quantile_weights(RiskSpectrum::cvar(1.0), n);
    for (std::size_t i = 0; i + 1 < n; ++i) EXPECT_EQ(w.quantile_weights[i], 0.0);
    EXPECT_EQ(w.quantile_weights.back(), 1.0);
    EXPECT_EQ(w.level_masses.back(), 1.0);
  }
}

TEST(QuantileWeights, CvarOnGrid) {
  const auto w = quantile_weights(RiskSpectrum::cvar(0.5), 4);
  EXPECT_EQ(w.quantile_weights, (std::vector<double>{0, 0, 2, 0}));
  // Closed rule: weight 1/alpha at index floor(alpha N) + 1 (1-based).
  for (std::size_t n : {10u, 20u, 50u}) {
    for (std::size_t k = 1; k < n; ++k) {
      const double alpha = static_cast<double>(k) / n;
      const auto g = quantile_weights(RiskSpectrum::cvar(alpha), n);
      for (std::size_t i = 0; i < n; ++i)
        EXPECT_DOUBLE_EQ(g.quantile_weights[i], i == k ? 1.0 / alpha : 0.0);
    }
  }
}

TEST(QuantileWeights, ErmKeepsTheAtomAtLevelOne) {
  const auto w = quantile_weights(RiskSpectrum::erm(1.0), 2);
  const double norm = 1.0 - std::exp(-1.0);
  EXPECT_NEAR(w.quantile_weights[0], (1.0 - std::exp(-0.5)) / norm, 1e-12);
  EXPECT_NEAR(w.quantile_weights[0], 0.6225, 5e-5);
  // phi(1/2) in full on the closed last interval, because mu has an atom phi(1) at 1.
  EXPECT_NEAR(w.quantile_weights[1], std::exp(-0.5) / norm, 1e-12);
  EXPECT_NEAR(w.quantile_weights[1], 0.9595, 5e-5);
}

TEST(QuantileWeights, LevelMassesMatchQuadrature) {
  // mu(da) = -a phi'(a) da on (0,1) plus an atom phi(1) at 1.
  const double lambda = 3.0;
  const double norm = 1.0 - std::exp(-lambda);
  auto density_erm = [&](double a) { return a * lambda * lambda * std::exp(-lambda * a) / norm; };
  const double nu = 4.0;
  auto density_dp = [&](double a) { return a * nu * (nu - 1.0) * std::pow(1.0 - a, nu - 2.0); };
  const std::size_t n = 8;
  const auto we = quantile_weights(RiskSpectrum::erm(lambda), n);
  const auto wd = quantile_weights(RiskSpectrum::dual_power(nu), n);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = static_cast<double>(i) / n, b = static_cast<double>(i + 1) / n;
    double ve = oracle::simpson(density_erm, a, b);
    double vd = oracle::simpson(density_dp, a, b);
    if (i + 1 == n) ve += lambda * std::exp(-lambda) / norm;
    EXPECT_NEAR(we.level_masses[i], ve, 1e-10);
    EXPECT_NEAR(wd.level_masses[i], vd, 1e-10);
  }
}

TEST(QuantileWeights, MassesSumToOne) {
  std::mt19937_64 rng(21);
  for (int k = 0; k < 200; ++k) {
    const auto s = random_spectrum(rng);
    const std::size_t n = 1 + rng() % 80;
    const auto w = quantile_weights(s, n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_GE(w.quantile_weights[i], 0.0);
      EXPECT_GE(w.level_masses[i], 0.0);
      total += w.level_masses[i];
    }
    EXPECT_NEAR(total, 1.0, 1e-9) << s.to_string();
    // sum of quantile weights is phi(0)
    EXPECT_NEAR(std::accumulate(w.quantile_weights.begin(), w.quantile_weights.end(), 0.0),
                s.phi(0.0), 1e-9);
  }
}

TEST(Cvar, Example1) {
  const auto g = oracle::example1_return();
  EXPECT_NEAR(cvar(g, 0.4), 5.25, 1e-12);
  EXPECT_NEAR(cvar(g, 0.8), 6.375, 1e-12);
  EXPECT_NEAR(cvar(g, 1.0), g.mean(), 1e-12);
  EXPECT_EQ(cvar(DiscreteDistribution::point(-2.5), 0.3), -2.5);
  EXPECT_THROW(cvar(g, 0.0), std::domain_error);
  EXPECT_THROW(cvar(g, 1.01), std::domain_error);
}

TEST(Cvar, MatchesRockafellarUryasev) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.001, 1.0);
  for (int k = 0; k < 300; ++k) {
    const auto d = oracle::random_distribution(rng);
    const double alpha = u(rng);
    EXPECT_NEAR(cvar(d, alpha), oracle::cvar_rockafellar(d, alpha), 1e-9);
  }
}

TEST(Srm, Examples) {
  const auto g = oracle::example1_return();
  EXPECT_NEAR(srm_value(example1_spectrum(), g), 5.5875, 1e-12);
  EXPECT_NEAR(srm_value(RiskSpectrum::cvar(1.0), g), g.mean(), 1e-12);
  const std::vector<double> samples{4, 1, 3, 2};
  EXPECT_NEAR(srm_value(RiskSpectrum::cvar(0.5), std::span<const double>(samples)), 1.5, 1e-15);
}

TEST(Srm, MatchesQuadratureOracle) {
  std::mt19937_64 rng(2);
  for (int k = 0; k < 20; ++k) {
    const auto d = oracle::random_distribution(rng, 6);
    const auto s = random_spectrum(rng);
    const double want = oracle::srm_quadrature([&](double u) { return s.phi(u); }, d);
    EXPECT_NEAR(srm_value(s, d), want, 2e-3) << s.to_string();
  }
}

TEST(Srm, CvarMixtureOfCvars) {
  std::mt19937_64 rng(4);
  for (int k = 0; k < 100; ++k) {
    const auto d = oracle::random_distribution(rng);
    const auto s = random_spectrum(rng);
    if (!s.is_cvar_mixture()) continue;
    double want = 0.0;
    for (const auto& c : s.components()) want += c.weight * oracle::cvar_rockafellar(d, c.level);
    EXPECT_NEAR(srm_value(s, d), want, 1e-9);
  }
}

TEST(Srm, CoherenceAndBounds) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 300; ++k) {
    const auto d = oracle::random_distribution(rng);
    const auto s = random_spectrum(rng);
    const double a = 5.0 * u(rng);
    const double b = 20.0 * (u(rng) - 0.5);
    EXPECT_NEAR(srm_value(s, d.affine(b, a)), a * srm_value(s, d) + b, 1e-9);
    EXPECT_LE(srm_value(s, d), d.mean() + 1e-9);
    EXPECT_GE(srm_value(s, d), d.min() - 1e-9);
    const double a1 = 0.01 + 0.99 * u(rng), a2 = 0.01 + 0.99 * u(rng);
    EXPECT_LE(cvar(d, std::min(a1, a2)), cvar(d, std::max(a1, a2)) + 1e-12);
  }
}

TEST(Srm, QuantileOverloadAgreesWithDiscrete) {
  std::mt19937_64 rng(8);
  for (int k = 0; k < 50; ++k) {
    const auto s = random_spectrum(rng);
    std::vector<double> v(1 + rng() % 30);
    for (auto& x : v) x = std::normal_distribution<double>()(rng);
    const auto q = QuantileDistribution::from_unsorted(v);
    EXPECT_NEAR(srm_value(s, q), srm_value(s, q.to_discrete()), 1e-10);
  }
}

TEST(HFunction, Example1Values) {
  const auto h = build_h_exact(example1_spectrum(), oracle::example1_return());
  EXPECT_NEAR(h_eval(h, 5.0), 3.65, 1e-12);
  EXPECT_NEAR(h_eval(h, 20.0), 6.9, 1e-12);
  EXPECT_NEAR(h.constant_term(), 6.9, 1e-12);
}

TEST(HFunction, BuildFromQuantiles) {
  const auto q = quantile_project(oracle::example1_return(), 50);
  const auto h = build_h(example1_spectrum(), q);
  EXPECT_EQ(h.ref_quantiles, q.theta());
  EXPECT_EQ(h.quantile_weights, quantile_weights(example1_spectrum(), 50).quantile_weights);

  const auto zero = build_h(RiskSpectrum::cvar(1.0), QuantileDistribution::zeros(5));
  EXPECT_EQ(h_eval(zero, 3.0), 0.0);
  EXPECT_EQ(h_eval(zero, -3.0), -3.0);
  EXPECT_EQ(zero.quantile_weights, (std::vector<double>{0, 0, 0, 0, 1}));
}

TEST(HFunction, ConjugateIdentity) {
  std::mt19937_64 rng(17);
  for (int k = 0; k < 400; ++k) {
    const auto d = oracle::random_distribution(rng);
    const auto s = random_spectrum(rng);
    const auto h = build_h_exact(s, d);
    EXPECT_NEAR(expected_h(h, d), srm_value(s, d), 1e-8) << s.to_string();
  }
}

TEST(HFunction, ConcaveMonotoneLipschitz) {
  std::mt19937_64 rng(19);
  std::uniform_real_distribution<double> z(-40.0, 40.0);
  for (int k = 0; k < 100; ++k) {
    const auto d = oracle::random_distribution(rng);
    const auto s = random_spectrum(rng);
    const auto h = build_h_exact(s, d);
    for (int j = 0; j < 20; ++j) {
      double z1 = z(rng), z2 = z(rng);
      if (z1 > z2) std::swap(z1, z2);
      if (z2 - z1 < 1e-6) continue;
      const double slope = (h_eval(h, z2) - h_eval(h, z1)) / (z2 - z1);
      EXPECT_GE(slope, -1e-9);
      EXPECT_LE(slope, s.phi(0.0) + 1e-9);
      const double mid = 0.5 * (z1 + z2);
      EXPECT_GE(h_eval(h, mid), 0.5 * (h_eval(h, z1) + h_eval(h, z2)) - 1e-9);
    }
  }
}

TEST(CvarMixture, ExactForCvarFamilies) {
  const auto m = cvar_mixture(example1_spectrum(), 50);
  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(m[0].level, 0.4);
  EXPECT_EQ(m[1].weight, 0.3);
}

TEST(CvarMixture, DiscretizedErmApproximatesSrm) {
  std::mt19937_64 rng(23);
  const auto s = RiskSpectrum::erm(4.0);
  const auto m = cvar_mixture(s, 200);
  double total = 0.0;
  for (const auto& c : m) {
    EXPECT_GT(c.level, 0.0);
    EXPECT_LE(c.level, 1.0);
    total += c.weight;
  }
  EXPECT_NEAR(total, 1.0, 1e-12);
  for (int k = 0; k < 20; ++k) {
    const auto d = oracle::random_distribution(rng);
    double approx = 0.0;
    for (const auto& c : m) approx += c.weight * cvar(d, c.level);
    EXPECT_NEAR(approx, srm_value(s, d), 0.05 * (d.max() - d.min()) + 1e-9);
  }
}
