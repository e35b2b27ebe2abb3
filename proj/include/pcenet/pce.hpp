#pragma once

// Orthonormal Hermite polynomial chaos over R^d with total-degree
// truncation.

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pcenet/errors.hpp"
#include "pcenet/nncore.hpp"

namespace pcenet {

/// Probabilists' Hermite polynomial He_n(x) / sqrt(n!), orthonormal under
/// N(0,1). Uses the normalized three-term recurrence
///   psi_{n+1} = (x psi_n - sqrt(n) psi_{n-1}) / sqrt(n+1).
inline double hermite_orthonormal(unsigned n, double x) {
  double prev = 0.0, cur = 1.0;
  for (unsigned k = 0; k < n; ++k) {
    const double next = (x * cur - std::sqrt(static_cast<double>(k)) * prev) /
                        std::sqrt(static_cast<double>(k + 1));
    prev = cur;
    cur = next;
  }
  return cur;
}

/// psi_0(x) .. psi_max_degree(x).
inline Vector hermite_orthonormal_all(unsigned max_degree, double x) {
  Vector out(max_degree + 1);
  out[0] = 1.0;
  if (max_degree >= 1) out[1] = x;
  for (unsigned k = 1; k < max_degree; ++k)
    out[k + 1] = (x * out[k] - std::sqrt(static_cast<double>(k)) * out[k - 1]) /
                 std::sqrt(static_cast<double>(k + 1));
  return out;
}

using MultiIndex = std::vector<unsigned>;

inline unsigned total_degree(const MultiIndex& a) {
  unsigned s = 0;
  for (auto e : a) s += e;
  return s;
}

/// (N + d)! / (N! d!), computed without factorials.
inline std::size_t basis_size(std::size_t d, std::size_t degree) {
  std::uint64_t r = 1;
  for (std::size_t k = 1; k <= d; ++k) r = r * (degree + k) / k;
  return static_cast<std::size_t>(r);
}

namespace detail {

inline void emit_with_degree(std::size_t dim, unsigned remaining, MultiIndex& cur,
                             std::vector<MultiIndex>& out) {
  if (dim + 1 == cur.size()) {
    cur[dim] = remaining;
    out.push_back(cur);
    return;
  }
  for (unsigned e = remaining + 1; e-- > 0;) {
    cur[dim] = e;
    emit_with_degree(dim + 1, remaining - e, cur, out);
  }
  cur[dim] = 0;
}

}  // namespace detail

/// All exponent vectors of total degree <= `degree`, grouped by degree and,
/// within a degree, in decreasing order of the leading exponents:
/// d=2, N=2 -> (0,0) (1,0) (0,1) (2,0) (1,1) (0,2).
inline std::vector<MultiIndex> enumerate_multi_indices(std::size_t d, unsigned degree) {
  if (d == 0) throw ConfigError("enumerate_multi_indices: dimension must be >= 1");
  std::vector<MultiIndex> out;
  out.reserve(basis_size(d, degree));
  MultiIndex cur(d, 0);
  for (unsigned t = 0; t <= degree; ++t) detail::emit_with_degree(0, t, cur, out);
  return out;
}

struct PceBasis {
  PceBasis() = default;
  PceBasis(std::size_t latent_dim, unsigned degree)
      : dim(latent_dim), degree(degree), indices(enumerate_multi_indices(latent_dim, degree)) {}

  std::size_t size() const noexcept { return indices.size(); }

  std::size_t dim = 0;
  unsigned degree = 0;
  std::vector<MultiIndex> indices;

  bool operator==(const PceBasis&) const = default;
};

/// Tensor-product values phi_j(z) = prod_k psi_{alpha_jk}(z_k), one per index.
inline Vector basis_eval(const PceBasis& basis, std::span<const double> z) {
  require_shape(z.size() == basis.dim, "basis_eval: point has dimension " +
                                           std::to_string(z.size()) + ", basis expects " +
                                           std::to_string(basis.dim));
  std::vector<Vector> uni(basis.dim);
  for (std::size_t k = 0; k < basis.dim; ++k) uni[k] = hermite_orthonormal_all(basis.degree, z[k]);
  Vector out(basis.size());
  for (std::size_t j = 0; j < basis.size(); ++j) {
    double p = 1.0;
    for (std::size_t k = 0; k < basis.dim; ++k) p *= uni[k][basis.indices[j][k]];
    out[j] = p;
  }
  return out;
}

/// Row i is basis_eval(basis, Z.row(i)).
inline Matrix design_matrix(const PceBasis& basis, const Matrix& points) {
  require_shape(points.rows() == 0 || points.cols() == basis.dim,
                "design_matrix: points have " + std::to_string(points.cols()) +
                    " columns, basis expects " + std::to_string(basis.dim));
  Matrix out(points.rows(), basis.size());
  for (std::size_t i = 0; i < points.rows(); ++i) {
    const Vector row = basis_eval(basis, points.row(i));
    std::copy(row.begin(), row.end(), out.row(i).begin());
  }
  return out;
}

struct PceModel {
  PceBasis basis;
  Vector coefficients;

  bool operator==(const PceModel&) const = default;
};

inline PceModel make_model(PceBasis basis, Vector coefficients) {
  require_shape(coefficients.size() == basis.size(),
                "PceModel: " + std::to_string(coefficients.size()) + " coefficients for " +
                    std::to_string(basis.size()) + " basis functions");
  return PceModel{std::move(basis), std::move(coefficients)};
}

inline double predict(const PceModel& model, std::span<const double> z) {
  const Vector phi = basis_eval(model.basis, z);
  return dot(model.coefficients, phi);
}

/// Evaluates design * coefficients.
inline Vector predict_design(const Matrix& design, std::span<const double> coefficients) {
  return matvec(design, coefficients);
}

/// Least squares with optional ridge: minimizes |Phi c - y|^2 + ridge |c|^2
/// by column-pivoted Householder QR on the stacked system [Phi; sqrt(ridge) I].
inline Vector ols_fit(const Matrix& design, std::span<const double> y, double ridge = 0.0) {
  require_shape(design.rows() == y.size(),
                "ols_fit: design has " + std::to_string(design.rows()) + " rows, targets " +
                    std::to_string(y.size()));
  if (design.rows() == 0) throw DataError("ols_fit: no observations");
  if (ridge < 0) throw ConfigError("ols_fit: ridge must be >= 0");

  const auto n = static_cast<Eigen::Index>(design.rows());
  const auto p = static_cast<Eigen::Index>(design.cols());
  const Eigen::Index extra = ridge > 0 ? p : 0;
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n + extra, p);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n + extra);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) a(i, j) = design(i, j);
    b(i) = y[i];
  }
  if (ridge > 0)
    for (Eigen::Index j = 0; j < p; ++j) a(n + j, j) = std::sqrt(ridge);

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
  if (qr.rank() < p)
    throw NumericError("ols_fit: normal equations are singular (rank " +
                       std::to_string(qr.rank()) + " < " + std::to_string(p) +
                       "); use a positive ridge");
  const Eigen::VectorXd c = qr.solve(b);
  Vector out(c.data(), c.data() + c.size());
  for (std::size_t j = 0; j < out.size(); ++j)
    if (!std::isfinite(out[j])) throw NumericError("ols_fit: non-finite coefficient");
  return out;
}

}  // namespace pcenet
