#pragma once

// Response moments of a PCE: global moments read off the coefficients and
// per-point conditional moments under a latent posterior, by tensorized
// Gauss-Hermite quadrature or Monte Carlo.

#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Eigenvalues>

#include "pcenet/errors.hpp"
#include "pcenet/nncore.hpp"
#include "pcenet/pce.hpp"
#include "pcenet/rng.hpp"
#include "pcenet/vae.hpp"

namespace pcenet {

struct QuadratureRule {
  Matrix nodes;    // count x d
  Vector weights;  // count, sums to 1

  std::size_t size() const noexcept { return weights.size(); }
};

inline constexpr std::size_t kMaxQuadraturePoints = 1'000'000;
inline constexpr unsigned kMaxMomentOrder = 8;

namespace detail {

// Nodes from the Jacobi matrix of the probabilists' Hermite recurrence
// (zero diagonal, off-diagonal sqrt(k)), polished with Newton steps on
// psi_q; weights from the Christoffel formula 1 / sum_k psi_k(x)^2.
inline void gauss_hermite_1d(unsigned q, Vector& nodes, Vector& weights) {
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(q);
  Eigen::VectorXd sub(q > 1 ? q - 1 : 0);
  for (unsigned k = 1; k < q; ++k) sub(k - 1) = std::sqrt(static_cast<double>(k));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
  es.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);

  nodes.assign(q, 0.0);
  weights.assign(q, 0.0);
  for (unsigned i = 0; i < q; ++i) {
    double x = es.eigenvalues()(i);
    for (int it = 0; it < 3 && q > 0; ++it) {
      const Vector psi = hermite_orthonormal_all(q, x);
      // psi_q'(x) = sqrt(q) psi_{q-1}(x)
      const double deriv = std::sqrt(static_cast<double>(q)) * psi[q - 1];
      if (deriv == 0.0) break;
      x -= psi[q] / deriv;
    }
    const Vector psi = hermite_orthonormal_all(q - 1, x);
    double s = 0.0;
    for (double v : psi) s += v * v;
    nodes[i] = x;
    weights[i] = 1.0 / s;
  }
  // Exact symmetry about the origin.
  for (unsigned i = 0; i < q / 2; ++i) {
    const unsigned j = q - 1 - i;
    const double x = 0.5 * (nodes[j] - nodes[i]);
    const double w = 0.5 * (weights[i] + weights[j]);
    nodes[i] = -x;
    nodes[j] = x;
    weights[i] = weights[j] = w;
  }
  if (q % 2 == 1) nodes[q / 2] = 0.0;
  double total = 0.0;
  for (double w : weights) total += w;
  for (double& w : weights) w /= total;
}

}  // namespace detail

/// Tensor Gauss-Hermite rule for the standard normal density on R^d.
inline QuadratureRule gauss_hermite_rule(unsigned q, std::size_t d) {
  if (q < 1 || q > 32) throw ConfigError("gauss_hermite_rule: q must be in [1, 32]");
  if (d < 1) throw ConfigError("gauss_hermite_rule: d must be >= 1");
  std::size_t count = 1;
  for (std::size_t k = 0; k < d; ++k) {
    count *= q;
    if (count > kMaxQuadraturePoints)
      throw ConfigError("gauss_hermite_rule: q^d = " + std::to_string(q) + "^" +
                        std::to_string(d) + " exceeds " + std::to_string(kMaxQuadraturePoints) +
                        " nodes; use the monte_carlo method");
  }
  Vector x1, w1;
  detail::gauss_hermite_1d(q, x1, w1);

  QuadratureRule rule{Matrix(count, d), Vector(count, 1.0)};
  for (std::size_t idx = 0; idx < count; ++idx) {
    std::size_t rem = idx;
    for (std::size_t k = d; k-- > 0;) {
      const std::size_t i = rem % q;
      rem /= q;
      rule.nodes(idx, k) = x1[i];
      rule.weights[idx] *= w1[i];
    }
  }
  return rule;
}

struct QuadratureMethod {
  unsigned points_per_dim = 4;
};

struct MonteCarloMethod {
  std::size_t samples = 1000;
  std::uint64_t seed = 0;
};

using MomentMethod = std::variant<QuadratureMethod, MonteCarloMethod>;

inline std::string method_name(const MomentMethod& m) {
  return std::holds_alternative<QuadratureMethod>(m) ? "quadrature" : "monte_carlo";
}

struct MomentRequest {
  unsigned order = 1;
  MomentMethod method = QuadratureMethod{};
};

/// Quadrature with q = N + 1 per dimension when q^d <= 1e4 (exact for the
/// mean and variance of a degree-N model), otherwise 1000-sample Monte Carlo.
inline MomentMethod auto_method(const PceModel& model, std::uint64_t mc_seed) {
  const unsigned q = model.basis.degree + 1;
  double count = std::pow(static_cast<double>(q), static_cast<double>(model.basis.dim));
  if (count <= 1e4) return QuadratureMethod{q};
  return MonteCarloMethod{1000, mc_seed};
}

namespace detail {

// Calls f(z, weight) for each integration point of N(mu, diag(sigma^2)).
template <typename F>
void for_each_posterior_point(const LatentPosterior& post, const MomentMethod& method, F&& f) {
  const std::size_t d = post.dim();
  Vector z(d);
  if (const auto* qm = std::get_if<QuadratureMethod>(&method)) {
    const QuadratureRule rule = gauss_hermite_rule(qm->points_per_dim, d);
    for (std::size_t i = 0; i < rule.size(); ++i) {
      for (std::size_t k = 0; k < d; ++k) z[k] = post.mu[k] + post.stddev(k) * rule.nodes(i, k);
      f(z, rule.weights[i]);
    }
  } else {
    const auto& mc = std::get<MonteCarloMethod>(method);
    if (mc.samples == 0) throw ConfigError("monte_carlo: samples must be >= 1");
    Rng rng(mc.seed);
    const double w = 1.0 / static_cast<double>(mc.samples);
    for (std::size_t s = 0; s < mc.samples; ++s) {
      for (std::size_t k = 0; k < d; ++k) z[k] = post.mu[k] + post.stddev(k) * standard_normal(rng);
      f(z, w);
    }
  }
}

}  // namespace detail

/// Approximates the integral of P(z)^k against N(mu, diag(exp(logvar))).
inline double conditional_moment(const PceModel& model, const LatentPosterior& posterior,
                                 const MomentRequest& request) {
  require_shape(posterior.dim() == model.basis.dim,
                "conditional_moment: posterior dimension " + std::to_string(posterior.dim()) +
                    " != model dimension " + std::to_string(model.basis.dim));
  if (request.order < 1 || request.order > kMaxMomentOrder)
    throw ConfigError("conditional_moment: order must be in [1, " +
                      std::to_string(kMaxMomentOrder) + "]");
  double acc = 0.0;
  detail::for_each_posterior_point(posterior, request.method, [&](const Vector& z, double w) {
    acc += w * std::pow(predict(model, z), static_cast<int>(request.order));
  });
  return acc;
}

struct MeanVar {
  double mean = 0.0;
  double variance = 0.0;
};

/// Mean and variance (m2 - m1^2, floored at 0) from one set of points.
inline MeanVar conditional_mean_var(const PceModel& model, const LatentPosterior& posterior,
                                    const MomentMethod& method) {
  require_shape(posterior.dim() == model.basis.dim,
                "conditional_mean_var: posterior dimension mismatch");
  double m1 = 0.0, m2 = 0.0;
  detail::for_each_posterior_point(posterior, method, [&](const Vector& z, double w) {
    const double p = predict(model, z);
    m1 += w * p;
    m2 += w * p * p;
  });
  return {m1, std::max(0.0, m2 - m1 * m1)};
}

/// Mean is the constant-term coefficient; variance is the sum of squares of
/// the remaining coefficients (orthonormal basis, constant term first).
inline MeanVar global_moments(const PceModel& model) {
  if (model.coefficients.empty()) return {};
  MeanVar mv{model.coefficients[0], 0.0};
  for (std::size_t j = 1; j < model.coefficients.size(); ++j)
    mv.variance += model.coefficients[j] * model.coefficients[j];
  return mv;
}

struct MomentRow {
  std::size_t point_index = 0;
  unsigned order = 1;
  std::string method;
  double value = 0.0;
};

inline void write_moment_csv(std::ostream& out, const std::vector<MomentRow>& rows) {
  out << "point_index,k,method,value\n";
  const auto old = out.precision(17);
  for (const auto& r : rows)
    out << r.point_index << ',' << r.order << ',' << r.method << ',' << r.value << '\n';
  out.precision(old);
}

}  // namespace pcenet
