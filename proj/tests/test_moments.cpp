#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "pcenet/moments.hpp"

using namespace pcenet;

namespace {

PceModel random_model(std::size_t d, unsigned N, Rng& rng) {
  PceBasis b(d, N);
  Vector c(b.size());
  for (auto& v : c) v = standard_normal(rng);
  return make_model(std::move(b), std::move(c));
}

}  // namespace

TEST(GaussHermite, SmallRules) {
  const QuadratureRule r1 = gauss_hermite_rule(1, 1);
  ASSERT_EQ(r1.size(), 1u);
  EXPECT_EQ(r1.nodes(0, 0), 0.0);
  EXPECT_EQ(r1.weights[0], 1.0);

  const QuadratureRule r2 = gauss_hermite_rule(2, 1);
  EXPECT_NEAR(r2.nodes(0, 0), -1.0, 1e-15);
  EXPECT_NEAR(r2.nodes(1, 0), 1.0, 1e-15);
  EXPECT_NEAR(r2.weights[0], 0.5, 1e-15);
  EXPECT_NEAR(r2.weights[1], 0.5, 1e-15);

  const QuadratureRule r3 = gauss_hermite_rule(3, 2);
  EXPECT_EQ(r3.size(), 9u);
  double s = 0;
  for (double w : r3.weights) s += w;
  EXPECT_NEAR(s, 1.0, 1e-12);
  // 3-point rule: nodes 0, +-sqrt(3), weights 2/3, 1/6
  const QuadratureRule u3 = gauss_hermite_rule(3, 1);
  EXPECT_NEAR(u3.nodes(2, 0), std::sqrt(3.0), 1e-14);
  EXPECT_NEAR(u3.weights[1], 2.0 / 3.0, 1e-14);
}

TEST(GaussHermite, Exactness) {
  for (unsigned q = 2; q <= 8; ++q) {
    const QuadratureRule r = gauss_hermite_rule(q, 1);
    for (unsigned k = 0; k <= 2 * q - 1; ++k) {
      // Tolerance scales with the size of the summed terms, which reach ~1e4
      // for the odd moments of the wider rules.
      double s = 0, mag = 0;
      for (std::size_t i = 0; i < r.size(); ++i) {
        s += r.weights[i] * std::pow(r.nodes(i, 0), k);
        mag += r.weights[i] * std::pow(std::abs(r.nodes(i, 0)), k);
      }
      const double exact = oracle::normal_moment(k);
      EXPECT_LE(std::abs(s - exact), 1e-12 * std::max(1.0, mag)) << "q=" << q << " k=" << k;
    }
  }
}

TEST(GaussHermite, LargeRuleAndBudget) {
  const QuadratureRule r = gauss_hermite_rule(32, 1);
  double s = 0, s2 = 0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    s += r.weights[i];
    s2 += r.weights[i] * r.nodes(i, 0) * r.nodes(i, 0);
  }
  EXPECT_NEAR(s, 1.0, 1e-12);
  EXPECT_NEAR(s2, 1.0, 1e-11);
  EXPECT_THROW(gauss_hermite_rule(33, 1), ConfigError);
  EXPECT_THROW(gauss_hermite_rule(0, 1), ConfigError);
  try {
    gauss_hermite_rule(10, 7);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("monte_carlo"), std::string::npos);
  }
}

TEST(ConditionalMoment, Examples) {
  const PceModel constant = make_model(PceBasis(2, 2), {3.5, 0, 0, 0, 0, 0});
  const LatentPosterior post{{0.7, -1.2}, {0.3, -0.8}};
  EXPECT_NEAR(conditional_moment(constant, post, {1, QuadratureMethod{3}}), 3.5, 1e-13);
  EXPECT_NEAR(conditional_moment(constant, post, {1, MonteCarloMethod{50, 1}}), 3.5, 1e-13);

  const PceModel ident = make_model(PceBasis(1, 1), {0, 1});
  const LatentPosterior p1{{1.0}, {0.0}};
  EXPECT_NEAR(conditional_moment(ident, p1, {1, QuadratureMethod{2}}), 1.0, 1e-14);
  EXPECT_NEAR(conditional_moment(ident, p1, {2, QuadratureMethod{2}}), 2.0, 1e-14);

  EXPECT_THROW(conditional_moment(ident, p1, {0, QuadratureMethod{2}}), ConfigError);
  EXPECT_THROW(conditional_moment(ident, p1, {9, QuadratureMethod{2}}), ConfigError);
  EXPECT_THROW(conditional_moment(ident, post, {1, QuadratureMethod{2}}), ShapeError);
}

TEST(ConditionalMoment, QuadratureAgreesWithMonteCarlo) {
  Rng rng(21);
  for (int rep = 0; rep < 3; ++rep) {
    const PceModel m = random_model(2, 3, rng);
    const LatentPosterior post{{0.5 * standard_normal(rng), 0.5 * standard_normal(rng)},
                               {-1.0 + 0.3 * standard_normal(rng), -0.5}};
    for (unsigned k : {1u, 2u}) {
      const double quad = conditional_moment(m, post, {k, QuadratureMethod{8}});
      // Standard error from an independent sample of the integrand.
      Rng r2(1000 + rep);
      const std::size_t n = 1'000'000;
      double s = 0, ss = 0;
      Vector z(2);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < 2; ++j) z[j] = post.mu[j] + post.stddev(j) * standard_normal(r2);
        const double v = std::pow(predict(m, z), static_cast<int>(k));
        s += v;
        ss += v * v;
      }
      const double mean = s / n;
      const double se = std::sqrt((ss / n - mean * mean) / n);
      EXPECT_LT(std::abs(quad - mean), 3 * se) << "k=" << k;
      const double lib_mc = conditional_moment(m, post, {k, MonteCarloMethod{n, 5u + rep}});
      EXPECT_LT(std::abs(quad - lib_mc), 4 * se) << "k=" << k;
    }
  }
}

TEST(ConditionalMoment, PriorPosteriorGivesGlobalMoments) {
  Rng rng(22);
  const PceModel m = random_model(2, 3, rng);
  const LatentPosterior prior{{0, 0}, {0, 0}};
  const MeanVar g = global_moments(m);
  const MeanVar c = conditional_mean_var(m, prior, QuadratureMethod{4});
  EXPECT_NEAR(c.mean, g.mean, 1e-12);
  EXPECT_NEAR(c.variance, g.variance, 1e-11 * std::max(1.0, g.variance));
}

TEST(ConditionalMoment, AffineNodeMapping) {
  // P(z) = z1 * z2 under N(mu, diag(s^2)); the mapped polynomial's mean is mu1*mu2.
  const PceModel m = make_model(PceBasis(2, 2), {0, 0, 0, 0, 1, 0});
  const LatentPosterior post{{0.4, -1.5}, {std::log(0.25), std::log(4.0)}};
  EXPECT_NEAR(conditional_moment(m, post, {1, QuadratureMethod{3}}), 0.4 * -1.5, 1e-14);
  // E[(z1 z2)^2] = (mu1^2 + s1^2)(mu2^2 + s2^2)
  EXPECT_NEAR(conditional_moment(m, post, {2, QuadratureMethod{3}}), (0.16 + 0.25) * (2.25 + 4.0),
              1e-12);
}

TEST(ConditionalMeanVar, Examples) {
  const PceModel constant = make_model(PceBasis(1, 2), {2, 0, 0});
  EXPECT_EQ(conditional_mean_var(constant, {{0.3}, {0.1}}, QuadratureMethod{3}).variance, 0.0);
  const PceModel ident = make_model(PceBasis(1, 1), {0, 1});
  for (unsigned q = 2; q <= 6; ++q) {
    const MeanVar mv = conditional_mean_var(ident, {{0.0}, {0.0}}, QuadratureMethod{q});
    EXPECT_NEAR(mv.mean, 0.0, 1e-15);
    EXPECT_NEAR(mv.variance, 1.0, 1e-14);
  }
  Rng rng(3);
  for (int rep = 0; rep < 50; ++rep) {
    const PceModel m = random_model(2, 2, rng);
    const LatentPosterior p{{standard_normal(rng), standard_normal(rng)}, {-12.0, -12.0}};
    EXPECT_GE(conditional_mean_var(m, p, QuadratureMethod{3}).variance, 0.0);
  }
}

TEST(GlobalMoments, Examples) {
  const MeanVar a = global_moments(make_model(PceBasis(1, 1), {2, 3}));
  EXPECT_EQ(a.mean, 2.0);
  EXPECT_EQ(a.variance, 9.0);
  EXPECT_EQ(global_moments(make_model(PceBasis(2, 1), {5, 0, 0})).variance, 0.0);
}

TEST(GlobalMoments, VarianceMatchesSampleVariance) {
  Rng rng(404);
  const PceModel m = random_model(2, 3, rng);
  const std::size_t n = 100000;
  Vector v(n);
  for (auto& x : v) x = predict(m, Vector{standard_normal(rng), standard_normal(rng)});
  double mean = 0;
  for (double x : v) mean += x;
  mean /= n;
  double m2 = 0, m4 = 0;
  for (double x : v) {
    m2 += (x - mean) * (x - mean);
    m4 += std::pow(x - mean, 4);
  }
  m2 /= n - 1;
  m4 /= n;
  const double se = std::sqrt((m4 - m2 * m2) / n);
  EXPECT_LT(std::abs(global_moments(m).variance - m2), 3 * se);
}

TEST(AutoMethod, QuadratureUnlessTooManyNodes) {
  Rng rng(1);
  const PceModel small = random_model(2, 3, rng);
  ASSERT_TRUE(std::holds_alternative<QuadratureMethod>(auto_method(small, 1)));
  EXPECT_EQ(std::get<QuadratureMethod>(auto_method(small, 1)).points_per_dim, 4u);
  const PceModel wide = random_model(7, 3, rng);  // 4^7 > 1e4
  ASSERT_TRUE(std::holds_alternative<MonteCarloMethod>(auto_method(wide, 9)));
  EXPECT_EQ(std::get<MonteCarloMethod>(auto_method(wide, 9)).samples, 1000u);
}

TEST(MomentCsv, Rows) {
  std::ostringstream out;
  write_moment_csv(out, {{3, 2, "quadrature", 1.5}, {4, 1, "monte_carlo", -0.25}});
  EXPECT_EQ(out.str(), "point_index,k,method,value\n3,2,quadrature,1.5\n4,1,monte_carlo,-0.25\n");
}
