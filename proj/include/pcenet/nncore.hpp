#pragma once

// Dense linear algebra, activations and Adam for the VAE. Gradients are
// written out by hand; there is no autodiff.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "pcenet/errors.hpp"
#include "pcenet/rng.hpp"

namespace pcenet {

using Vector = std::vector<double>;

/// Row-major dense matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double value = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, value) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    require_shape(data_.size() == rows_ * cols_,
                  "Matrix: data length " + std::to_string(data_.size()) +
                      " != " + std::to_string(rows_) + "x" +
                      std::to_string(cols_));
    for (double v : data_)
      if (!std::isfinite(v)) throw NumericError("Matrix: non-finite entry");
  }
  Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      require_shape(r.size() == cols_, "Matrix: ragged initializer");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::vector<double>& data() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Returns the rows of `m` selected by `indices`, in that order.
inline Matrix select_rows(const Matrix& m, std::span<const std::size_t> indices) {
  Matrix out(indices.size(), m.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    auto src = m.row(indices[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

inline Vector select(std::span<const double> v, std::span<const std::size_t> indices) {
  Vector out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(v[i]);
  return out;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline Vector matvec(const Matrix& m, std::span<const double> x) {
  require_shape(x.size() == m.cols(), "matvec: expected vector of length " +
                                          std::to_string(m.cols()) + ", got " +
                                          std::to_string(x.size()));
  Vector y(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) y[r] = dot(m.row(r), x);
  return y;
}

enum class Activation { softplus, sigmoid, identity };

inline const char* to_string(Activation a) {
  switch (a) {
    case Activation::softplus: return "softplus";
    case Activation::sigmoid: return "sigmoid";
    case Activation::identity: return "identity";
  }
  return "identity";
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "softplus") return Activation::softplus;
  if (s == "sigmoid") return Activation::sigmoid;
  if (s == "identity") return Activation::identity;
  throw ConfigError("unknown activation '" + s + "'");
}

// max(x,0) + log1p(exp(-|x|)) does not overflow for large |x|.
inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double activate(Activation a, double x) {
  switch (a) {
    case Activation::softplus: return softplus(x);
    case Activation::sigmoid: return sigmoid(x);
    case Activation::identity: return x;
  }
  return x;
}

// Derivative with respect to the pre-activation.
inline double activate_derivative(Activation a, double x) {
  switch (a) {
    case Activation::softplus: return sigmoid(x);
    case Activation::sigmoid: {
      const double s = sigmoid(x);
      return s * (1.0 - s);
    }
    case Activation::identity: return 1.0;
  }
  return 1.0;
}

struct DenseLayer {
  Matrix weights;  // out x in
  Vector bias;     // out
  Activation activation = Activation::identity;

  std::size_t in_dim() const noexcept { return weights.cols(); }
  std::size_t out_dim() const noexcept { return weights.rows(); }
  std::size_t parameter_count() const noexcept { return weights.data().size() + bias.size(); }

  bool operator==(const DenseLayer&) const = default;
};

inline DenseLayer make_layer(std::size_t in, std::size_t out, Activation act) {
  return DenseLayer{Matrix(out, in), Vector(out, 0.0), act};
}

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
inline DenseLayer init_layer(std::size_t in, std::size_t out, Activation act, Rng& rng) {
  DenseLayer layer = make_layer(in, out, act);
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (auto& w : layer.weights.data()) w = u(rng);
  for (auto& b : layer.bias) b = u(rng);
  return layer;
}

inline Vector pre_activation(const DenseLayer& layer, std::span<const double> x) {
  require_shape(x.size() == layer.in_dim(),
                "layer: expected input of length " + std::to_string(layer.in_dim()) +
                    ", got " + std::to_string(x.size()));
  require_shape(layer.bias.size() == layer.out_dim(), "layer: bias length != weight rows");
  Vector a = matvec(layer.weights, x);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += layer.bias[i];
  return a;
}

inline Vector layer_forward(const DenseLayer& layer, std::span<const double> x) {
  Vector a = pre_activation(layer, x);
  for (auto& v : a) v = activate(layer.activation, v);
  return a;
}

struct LayerGradients {
  Vector input_grad;
  Matrix weight_grad;
  Vector bias_grad;
};

/// Backpropagates `upstream_grad` (dL/d output) through the layer evaluated
/// at `cached_input`.
inline LayerGradients layer_backward(const DenseLayer& layer,
                                     std::span<const double> cached_input,
                                     std::span<const double> upstream_grad) {
  require_shape(upstream_grad.size() == layer.out_dim(),
                "layer_backward: upstream gradient length " +
                    std::to_string(upstream_grad.size()) + " != " +
                    std::to_string(layer.out_dim()));
  const Vector a = pre_activation(layer, cached_input);
  LayerGradients g{Vector(layer.in_dim(), 0.0), Matrix(layer.out_dim(), layer.in_dim()),
                   Vector(layer.out_dim(), 0.0)};
  for (std::size_t r = 0; r < layer.out_dim(); ++r) {
    const double delta = upstream_grad[r] * activate_derivative(layer.activation, a[r]);
    g.bias_grad[r] = delta;
    auto wrow = layer.weights.row(r);
    auto grow = g.weight_grad.row(r);
    for (std::size_t c = 0; c < layer.in_dim(); ++c) {
      grow[c] = delta * cached_input[c];
      g.input_grad[c] += delta * wrow[c];
    }
  }
  return g;
}

struct AdamOptions {
  double step_size = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamState() = default;
  AdamState(std::size_t parameter_count, AdamOptions opts)
      : options(opts), first_moment(parameter_count, 0.0), second_moment(parameter_count, 0.0) {
    if (!(opts.step_size > 0) || !(opts.beta1 > 0 && opts.beta1 < 1) ||
        !(opts.beta2 > 0 && opts.beta2 < 1) || !(opts.epsilon > 0))
      throw ConfigError("Adam: step_size, epsilon must be > 0 and betas in (0,1)");
  }

  AdamOptions options;
  std::size_t step_count = 0;
  Vector first_moment;
  Vector second_moment;
};

/// One bias-corrected Adam step, in place.
inline void adam_update(AdamState& state, std::span<double> params, std::span<const double> grads) {
  require_shape(params.size() == grads.size(), "adam_update: params and grads differ in length");
  require_shape(state.first_moment.size() == params.size(),
                "adam_update: state sized for " + std::to_string(state.first_moment.size()) +
                    " parameters, got " + std::to_string(params.size()));
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i]))
      throw NumericError("adam_update: non-finite gradient at index " + std::to_string(i));
  }
  const auto& o = state.options;
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(o.beta1, t);
  const double c2 = 1.0 - std::pow(o.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    m = o.beta1 * m + (1.0 - o.beta1) * grads[i];
    v = o.beta2 * v + (1.0 - o.beta2) * grads[i] * grads[i];
    params[i] -= o.step_size * (m / c1) / (std::sqrt(v / c2) + o.epsilon);
  }
}

}  // namespace pcenet
