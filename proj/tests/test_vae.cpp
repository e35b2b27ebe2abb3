#include <gtest/gtest.h>

#include <cmath>

#include "pcenet/vae.hpp"

using namespace pcenet;

namespace {

VaeConfig small_config(std::size_t m, std::size_t h, std::size_t d, std::uint64_t seed = 0) {
  VaeConfig c;
  c.input_dim = m;
  c.hidden_dim = h;
  c.latent_dim = d;
  c.seed = seed;
  return c;
}

VaeParams random_vae(const VaeConfig& cfg, Rng& rng, double scale) {
  VaeParams p = zero_vae(cfg);
  Vector flat = p.pack();
  for (auto& v : flat) v = scale * standard_normal(rng);
  p.unpack(flat);
  return p;
}

}  // namespace

TEST(Encode, ZeroNetworkGivesPrior) {
  const VaeParams p = zero_vae(small_config(4, 3, 2));
  const LatentPosterior post = encode(p, Vector{0.1, 0.2, 0.3, 0.4});
  EXPECT_EQ(post.mu, (Vector{0, 0}));
  EXPECT_EQ(post.logvar, (Vector{0, 0}));
}

TEST(Encode, DeterministicPositiveVarianceShapeChecked) {
  Rng rng(2);
  const VaeParams p = random_vae(small_config(5, 4, 2), rng, 1.0);
  const Vector x{0.1, 0.9, 0.5, 0.3, 0.7};
  const LatentPosterior a = encode(p, x), b = encode(p, x);
  EXPECT_EQ(a.mu, b.mu);
  EXPECT_EQ(a.logvar, b.logvar);
  for (std::size_t k = 0; k < 2; ++k) EXPECT_GT(a.variance(k), 0.0);
  EXPECT_THROW(encode(p, Vector{0.1, 0.2}), ShapeError);
}

TEST(Reparameterize, VanishingNoise) {
  Rng rng(1);
  const LatentPosterior post{{1.5, -2.0}, {-50, -50}};
  const Vector z = reparameterize(post, rng);
  EXPECT_NEAR(z[0], 1.5, 1e-10);
  EXPECT_NEAR(z[1], -2.0, 1e-10);
}

TEST(Reparameterize, StandardNormalMoments) {
  Rng rng(99);
  const LatentPosterior post{{0, 0}, {0, 0}};
  const int n = 100000;
  double s[2] = {0, 0}, ss[2] = {0, 0};
  for (int i = 0; i < n; ++i) {
    const Vector z = reparameterize(post, rng);
    for (int k = 0; k < 2; ++k) {
      s[k] += z[k];
      ss[k] += z[k] * z[k];
    }
  }
  for (int k = 0; k < 2; ++k) {
    const double mean = s[k] / n;
    EXPECT_NEAR(mean, 0.0, 0.02);
    EXPECT_NEAR(ss[k] / n - mean * mean, 1.0, 0.05);
  }
  Rng a(5), b(5);
  EXPECT_EQ(reparameterize(LatentPosterior{{0.3}, {0.1}}, a),
            reparameterize(LatentPosterior{{0.3}, {0.1}}, b));
}

TEST(Kl, Examples) {
  EXPECT_EQ(kl_to_standard_normal(LatentPosterior{{0, 0}, {0, 0}}), 0.0);
  EXPECT_DOUBLE_EQ(kl_to_standard_normal(LatentPosterior{{1}, {0}}), 0.5);
  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    LatentPosterior p{{standard_normal(rng), standard_normal(rng)},
                      {3 * standard_normal(rng), 3 * standard_normal(rng)}};
    EXPECT_GT(kl_to_standard_normal(p), 0.0);
  }
}

TEST(Elbo, ZeroNetworkHandValue) {
  const std::size_t m = 5;
  const VaeParams p = zero_vae(small_config(m, 3, 2));
  Rng rng(0);
  const Vector eps{standard_normal(rng), standard_normal(rng)};
  const ElboTerms t = elbo_terms(p, Vector(m, 0.0), eps);
  EXPECT_DOUBLE_EQ(t.reconstruction, m * 0.25);
  EXPECT_EQ(t.kl, 0.0);
  Rng r2(0);
  EXPECT_DOUBLE_EQ(elbo_loss(p, Vector(m, 0.0), r2), m * 0.25);
}

TEST(Elbo, KlTermMatchesEncoder) {
  Rng rng(12);
  const VaeParams p = random_vae(small_config(4, 3, 2), rng, 0.7);
  const Vector x{0.2, 0.4, 0.6, 0.8};
  const ElboTerms t = elbo_terms(p, x, Vector{0.3, -1.1});
  EXPECT_DOUBLE_EQ(t.kl, kl_to_standard_normal(encode(p, x)));
}

TEST(Elbo, GradientMatchesCentralDifferences) {
  Rng rng(31337);
  const double h = 1e-5;
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t m = 3 + trial % 4, hd = 2 + trial % 4, d = 1 + trial % 3;
    VaeConfig cfg = small_config(m, hd, std::min(d, m - 1));
    cfg.recon_weight = trial % 2 ? 1.0 : 7.5;
    const VaeParams p = random_vae(cfg, rng, 0.6);
    Vector x(m), eps(cfg.latent_dim);
    for (auto& v : x) v = std::uniform_real_distribution<double>(0, 1)(rng);
    for (auto& e : eps) e = standard_normal(rng);

    Vector grad(p.parameter_count(), 0.0);
    elbo_terms(p, x, eps, grad);
    const Vector flat = p.pack();
    double max_rel = 0;
    for (std::size_t i = 0; i < flat.size(); ++i) {
      VaeParams pp = p, pm = p;
      Vector fp = flat, fm = flat;
      fp[i] += h;
      fm[i] -= h;
      pp.unpack(fp);
      pm.unpack(fm);
      const double fd = (elbo_terms(pp, x, eps).loss() - elbo_terms(pm, x, eps).loss()) / (2 * h);
      const double rel = std::abs(fd - grad[i]) / std::max(1.0, std::abs(fd) + std::abs(grad[i]));
      max_rel = std::max(max_rel, rel);
    }
    EXPECT_LT(max_rel, 1e-5) << "trial " << trial;
  }
}

TEST(TrainVae, ZeroEpochsReturnsInit) {
  const VaeConfig cfg = [] {
    VaeConfig c = small_config(4, 3, 2, 17);
    c.epochs = 0;
    return c;
  }();
  Dataset ds;
  ds.features = Matrix(10, 4, 0.5);
  ds.targets = Vector(10, 0.0);
  EXPECT_EQ(train_vae(ds, cfg), init_vae(cfg));
}

TEST(TrainVae, TwoClusterLossDecreasesAndDeterministic) {
  Rng rng(2024);
  Dataset ds;
  ds.features = Matrix(200, 4);
  ds.targets = Vector(200, 0.0);
  for (std::size_t i = 0; i < 200; ++i) {
    const double c = i % 2 ? 0.8 : 0.2;
    for (std::size_t j = 0; j < 4; ++j)
      ds.features(i, j) = std::clamp(c + 0.05 * standard_normal(rng), 0.0, 1.0);
  }
  VaeConfig cfg = small_config(4, 6, 2, 5);
  cfg.epochs = 50;
  cfg.learning_rate = 1e-2;
  const VaeTrainResult a = train_vae_with_history(ds, cfg);
  ASSERT_EQ(a.epoch_losses.size(), 50u);
  EXPECT_LT(a.epoch_losses.back(), a.epoch_losses.front());
  const VaeTrainResult b = train_vae_with_history(ds, cfg);
  EXPECT_EQ(a.params, b.params);
  EXPECT_EQ(a.epoch_losses, b.epoch_losses);
}

TEST(TrainVae, AggregatePosteriorNearOrigin) {
  Rng rng(8);
  const std::size_t m = 6;
  Dataset ds;
  ds.features = Matrix(300, m);
  ds.targets = Vector(300, 0.0);
  for (auto& v : ds.features.data()) v = std::clamp(0.5 + 0.1 * standard_normal(rng), 0.0, 1.0);
  VaeConfig cfg = small_config(m, 5, 2, 3);
  cfg.epochs = 60;
  cfg.learning_rate = 1e-2;
  const VaeParams p = train_vae(ds, cfg);
  const LatentSample s = latent_dataset(p, ds.features, 77);
  for (std::size_t k = 0; k < 2; ++k) {
    double mean = 0;
    for (std::size_t i = 0; i < s.z.rows(); ++i) mean += s.z(i, k);
    EXPECT_LT(std::abs(mean / s.z.rows()), 0.3);
  }
}

TEST(TrainVae, RejectsBadConfig) {
  Dataset ds;
  ds.features = Matrix(5, 3, 0.5);
  ds.targets = Vector(5, 0.0);
  EXPECT_THROW(train_vae(ds, small_config(3, 2, 3)), ConfigError);
  EXPECT_THROW(train_vae(ds, small_config(4, 2, 2)), ShapeError);
}

TEST(LatentDataset, EmptyDeterministicAndPriorVariance) {
  const VaeParams zero = zero_vae(small_config(3, 2, 2));
  EXPECT_EQ(latent_dataset(zero, Matrix(0, 3), 1).z.rows(), 0u);

  Matrix x(10000, 3, 0.25);
  const LatentSample a = latent_dataset(zero, x, 123);
  const LatentSample b = latent_dataset(zero, x, 123);
  EXPECT_EQ(a.z, b.z);
  EXPECT_EQ(a.posteriors.size(), 10000u);
  for (std::size_t k = 0; k < 2; ++k) {
    double s = 0, ss = 0;
    for (std::size_t i = 0; i < a.z.rows(); ++i) {
      s += a.z(i, k);
      ss += a.z(i, k) * a.z(i, k);
    }
    const double mean = s / a.z.rows();
    EXPECT_NEAR(ss / a.z.rows() - mean * mean, 1.0, 0.1);
  }
}
