#pragma once

// One-hidden-layer Gaussian VAE trained on the negative ELBO with a single
// reparameterized sample per data point.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "pcenet/data.hpp"
#include "pcenet/errors.hpp"
#include "pcenet/nncore.hpp"
#include "pcenet/rng.hpp"

namespace pcenet {

struct VaeConfig {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 6;
  std::size_t latent_dim = 2;
  double learning_rate = 1e-3;
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  // Multiplies the squared-error reconstruction term. 1 is a unit-variance
  // Gaussian likelihood with constants dropped.
  double recon_weight = 1.0;

  bool operator==(const VaeConfig&) const = default;

  void validate() const {
    if (latent_dim == 0 || latent_dim >= input_dim)
      throw ConfigError("vae: latent_dim must satisfy 1 <= d < input_dim (d=" +
                        std::to_string(latent_dim) + ", m=" + std::to_string(input_dim) + ")");
    if (hidden_dim == 0) throw ConfigError("vae: hidden_dim must be >= 1");
    if (!(learning_rate > 0)) throw ConfigError("vae: learning_rate must be > 0");
    if (batch_size == 0) throw ConfigError("vae: batch_size must be >= 1");
    if (!(recon_weight > 0)) throw ConfigError("vae: recon_weight must be > 0");
  }
};

struct LatentPosterior {
  Vector mu;
  Vector logvar;

  std::size_t dim() const noexcept { return mu.size(); }
  double variance(std::size_t k) const { return std::exp(logvar[k]); }
  double stddev(std::size_t k) const { return std::exp(0.5 * logvar[k]); }
};

inline constexpr double kLogvarMin = -10.0;
inline constexpr double kLogvarMax = 10.0;

struct VaeParams {
  DenseLayer encoder_hidden;  // softplus, m -> h
  DenseLayer encoder_mu;      // identity, h -> d
  DenseLayer encoder_logvar;  // identity, h -> d
  DenseLayer decoder_hidden;  // softplus, d -> h
  DenseLayer decoder_out;     // sigmoid, h -> m
  VaeConfig config;

  bool operator==(const VaeParams&) const = default;

  std::size_t input_dim() const noexcept { return encoder_hidden.in_dim(); }
  std::size_t latent_dim() const noexcept { return encoder_mu.out_dim(); }

  // Fixed packing order for optimizer state and gradients.
  auto layers() {
    return std::array<DenseLayer*, 5>{&encoder_hidden, &encoder_mu, &encoder_logvar,
                                      &decoder_hidden, &decoder_out};
  }
  auto layers() const {
    return std::array<const DenseLayer*, 5>{&encoder_hidden, &encoder_mu, &encoder_logvar,
                                            &decoder_hidden, &decoder_out};
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto* l : layers()) n += l->parameter_count();
    return n;
  }

  Vector pack() const {
    Vector out;
    out.reserve(parameter_count());
    for (const auto* l : layers()) {
      out.insert(out.end(), l->weights.data().begin(), l->weights.data().end());
      out.insert(out.end(), l->bias.begin(), l->bias.end());
    }
    return out;
  }

  void unpack(std::span<const double> flat) {
    require_shape(flat.size() == parameter_count(), "VaeParams::unpack: wrong length");
    std::size_t pos = 0;
    for (auto* l : layers()) {
      for (auto& w : l->weights.data()) w = flat[pos++];
      for (auto& b : l->bias) b = flat[pos++];
    }
  }
};

/// Zero weights and biases; the encoder then returns the prior.
inline VaeParams zero_vae(const VaeConfig& cfg) {
  VaeParams p;
  p.encoder_hidden = make_layer(cfg.input_dim, cfg.hidden_dim, Activation::softplus);
  p.encoder_mu = make_layer(cfg.hidden_dim, cfg.latent_dim, Activation::identity);
  p.encoder_logvar = make_layer(cfg.hidden_dim, cfg.latent_dim, Activation::identity);
  p.decoder_hidden = make_layer(cfg.latent_dim, cfg.hidden_dim, Activation::softplus);
  p.decoder_out = make_layer(cfg.hidden_dim, cfg.input_dim, Activation::sigmoid);
  p.config = cfg;
  return p;
}

inline VaeParams init_vae(const VaeConfig& cfg) {
  cfg.validate();
  Rng rng = make_rng(cfg.seed, "vae-init");
  VaeParams p;
  p.encoder_hidden = init_layer(cfg.input_dim, cfg.hidden_dim, Activation::softplus, rng);
  p.encoder_mu = init_layer(cfg.hidden_dim, cfg.latent_dim, Activation::identity, rng);
  p.encoder_logvar = init_layer(cfg.hidden_dim, cfg.latent_dim, Activation::identity, rng);
  p.decoder_hidden = init_layer(cfg.latent_dim, cfg.hidden_dim, Activation::softplus, rng);
  p.decoder_out = init_layer(cfg.hidden_dim, cfg.input_dim, Activation::sigmoid, rng);
  p.config = cfg;
  return p;
}

inline LatentPosterior encode(const VaeParams& params, std::span<const double> x) {
  require_shape(x.size() == params.input_dim(),
                "encode: input has length " + std::to_string(x.size()) + ", expected " +
                    std::to_string(params.input_dim()));
  const Vector h = layer_forward(params.encoder_hidden, x);
  LatentPosterior post{layer_forward(params.encoder_mu, h),
                       layer_forward(params.encoder_logvar, h)};
  for (auto& lv : post.logvar) lv = std::clamp(lv, kLogvarMin, kLogvarMax);
  return post;
}

/// z = mu + exp(logvar / 2) * eps with eps ~ N(0, I) drawn from `rng`.
inline Vector reparameterize(const LatentPosterior& post, Rng& rng) {
  Vector z(post.dim());
  for (std::size_t k = 0; k < z.size(); ++k)
    z[k] = post.mu[k] + std::exp(0.5 * post.logvar[k]) * standard_normal(rng);
  return z;
}

inline double kl_to_standard_normal(const LatentPosterior& post) {
  double kl = 0.0;
  for (std::size_t k = 0; k < post.dim(); ++k)
    kl += post.mu[k] * post.mu[k] + std::exp(post.logvar[k]) - 1.0 - post.logvar[k];
  return 0.5 * kl;
}

struct ElboTerms {
  double reconstruction = 0.0;
  double kl = 0.0;
  double loss() const { return reconstruction + kl; }
};

/// Negative ELBO for one point with explicit noise `eps`. If `grad` is
/// non-empty, dLoss/dparams (in VaeParams::pack order) is added into it.
inline ElboTerms elbo_terms(const VaeParams& params, std::span<const double> x,
                            std::span<const double> eps, std::span<double> grad = {}) {
  const std::size_t d = params.latent_dim();
  require_shape(eps.size() == d, "elbo: noise dimension mismatch");
  require_shape(x.size() == params.input_dim(), "elbo: input dimension mismatch");
  const double w = params.config.recon_weight;

  const Vector pre_h = pre_activation(params.encoder_hidden, x);
  Vector h(pre_h.size());
  for (std::size_t i = 0; i < h.size(); ++i) h[i] = softplus(pre_h[i]);
  const Vector mu = layer_forward(params.encoder_mu, h);
  const Vector raw_lv = layer_forward(params.encoder_logvar, h);
  Vector lv(d), sd(d), z(d);
  for (std::size_t k = 0; k < d; ++k) {
    lv[k] = std::clamp(raw_lv[k], kLogvarMin, kLogvarMax);
    sd[k] = std::exp(0.5 * lv[k]);
    z[k] = mu[k] + sd[k] * eps[k];
  }
  const Vector hd = layer_forward(params.decoder_hidden, z);
  const Vector xhat = layer_forward(params.decoder_out, hd);

  ElboTerms t;
  for (std::size_t j = 0; j < x.size(); ++j) t.reconstruction += (xhat[j] - x[j]) * (xhat[j] - x[j]);
  t.reconstruction *= w;
  t.kl = kl_to_standard_normal(LatentPosterior{mu, lv});
  if (grad.empty()) return t;
  require_shape(grad.size() == params.parameter_count(), "elbo: gradient buffer length");

  Vector d_xhat(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) d_xhat[j] = 2.0 * w * (xhat[j] - x[j]);
  const auto g_out = layer_backward(params.decoder_out, hd, d_xhat);
  const auto g_dh = layer_backward(params.decoder_hidden, z, g_out.input_grad);

  Vector d_mu(d), d_lv(d);
  for (std::size_t k = 0; k < d; ++k) {
    d_mu[k] = g_dh.input_grad[k] + mu[k];
    const double inside = raw_lv[k] >= kLogvarMin && raw_lv[k] <= kLogvarMax ? 1.0 : 0.0;
    d_lv[k] = inside * (g_dh.input_grad[k] * eps[k] * 0.5 * sd[k] + 0.5 * (std::exp(lv[k]) - 1.0));
  }
  const auto g_mu = layer_backward(params.encoder_mu, h, d_mu);
  const auto g_lv = layer_backward(params.encoder_logvar, h, d_lv);
  Vector d_h(h.size());
  for (std::size_t i = 0; i < h.size(); ++i) d_h[i] = g_mu.input_grad[i] + g_lv.input_grad[i];
  const auto g_eh = layer_backward(params.encoder_hidden, x, d_h);

  std::size_t pos = 0;
  auto add = [&](const LayerGradients& g) {
    for (double v : g.weight_grad.data()) grad[pos++] += v;
    for (double v : g.bias_grad) grad[pos++] += v;
  };
  add(g_eh);
  add(g_mu);
  add(g_lv);
  add(g_dh);
  add(g_out);
  return t;
}

/// Single-sample negative ELBO; draws the noise from `rng`.
inline double elbo_loss(const VaeParams& params, std::span<const double> x, Rng& rng) {
  Vector eps(params.latent_dim());
  for (auto& e : eps) e = standard_normal(rng);
  return elbo_terms(params, x, eps).loss();
}

struct VaeTrainResult {
  VaeParams params;
  Vector epoch_losses;  // mean per-point loss for each epoch
};

inline VaeTrainResult train_vae_with_history(const Dataset& dataset, const VaeConfig& cfg) {
  cfg.validate();
  require_shape(dataset.input_dim() == cfg.input_dim,
                "train_vae: dataset has " + std::to_string(dataset.input_dim()) +
                    " features, config expects " + std::to_string(cfg.input_dim));
  VaeTrainResult result{init_vae(cfg), {}};
  VaeParams& params = result.params;
  const std::size_t n = dataset.size();
  if (cfg.epochs == 0 || n == 0) return result;

  const std::size_t batch = n < 64 ? n : std::min(cfg.batch_size, n);
  AdamState adam(params.parameter_count(), AdamOptions{cfg.learning_rate});
  Rng rng = make_rng(cfg.seed, "vae-train");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Vector flat = params.pack();
  Vector grad(flat.size());
  Vector eps(cfg.latent_dim);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t stop = std::min(n, start + batch);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t b = start; b < stop; ++b) {
        for (auto& e : eps) e = standard_normal(rng);
        epoch_loss += elbo_terms(params, dataset.features.row(order[b]), eps, grad).loss();
      }
      const double scale = 1.0 / static_cast<double>(stop - start);
      for (auto& g : grad) g *= scale;
      for (std::size_t i = 0; i < grad.size(); ++i)
        if (!std::isfinite(grad[i]))
          throw NumericError("train_vae: non-finite gradient in epoch " + std::to_string(epoch + 1));
      adam_update(adam, flat, grad);
      params.unpack(flat);
    }
    epoch_loss /= static_cast<double>(n);
    if (!std::isfinite(epoch_loss))
      throw NumericError("train_vae: non-finite loss in epoch " + std::to_string(epoch + 1));
    result.epoch_losses.push_back(epoch_loss);
  }
  return result;
}

inline VaeParams train_vae(const Dataset& dataset, const VaeConfig& cfg) {
  return train_vae_with_history(dataset, cfg).params;
}

struct LatentSample {
  Matrix z;  // n x d, one draw per point
  std::vector<LatentPosterior> posteriors;
};

/// Encodes every row and draws one latent sample per point. Point i uses the
/// substream derived from (seed, "latent", i).
inline LatentSample latent_dataset(const VaeParams& params, const Matrix& features,
                                   std::uint64_t seed) {
  LatentSample out{Matrix(features.rows(), params.latent_dim()), {}};
  out.posteriors.reserve(features.rows());
  for (std::size_t i = 0; i < features.rows(); ++i) {
    out.posteriors.push_back(encode(params, features.row(i)));
    Rng rng = make_rng(seed, "latent", i);
    const Vector z = reparameterize(out.posteriors.back(), rng);
    std::copy(z.begin(), z.end(), out.z.row(i).begin());
  }
  return out;
}

}  // namespace pcenet
