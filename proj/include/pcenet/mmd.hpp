#pragma once

// Gaussian-kernel squared MMD between PCE responses and observed outputs,
// its coefficient gradient, Adam-based fitting and bandwidth selection by
// validation loss.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pcenet/errors.hpp"
#include "pcenet/moments.hpp"
#include "pcenet/nncore.hpp"
#include "pcenet/pce.hpp"
#include "pcenet/vae.hpp"

namespace pcenet {

inline const std::vector<double>& default_sigma_grid() {
  static const std::vector<double> grid{0.01, 0.1, 1.0, 2.5, 5.0, 10.0, 100.0};
  return grid;
}

enum class MmdInit { zeros, ols };

struct MmdFitConfig {
  std::vector<double> sigma_grid = default_sigma_grid();
  std::size_t max_iterations = 2000;
  double step_size = 1e-2;
  double tolerance = 1e-10;
  MmdInit init = MmdInit::ols;
  double ridge = 1e-10;  // for the OLS initializer

  void validate() const {
    if (sigma_grid.empty()) throw ConfigError("mmd: sigma_grid must be nonempty");
    for (double s : sigma_grid)
      if (!(s > 0)) throw ConfigError("mmd: sigma values must be > 0");
    if (!(step_size > 0)) throw ConfigError("mmd: step_size must be > 0");
    if (!(tolerance > 0)) throw ConfigError("mmd: tolerance must be > 0");
    if (ridge < 0) throw ConfigError("mmd: ridge must be >= 0");
  }
};

struct SigmaCvEntry {
  double sigma = 0.0;
  std::optional<double> cv_loss;  // empty when the fit failed
  std::string error;
};

struct FitTrace {
  Vector losses;  // loss at each evaluated iterate, iteration 0 first
  std::size_t best_iteration = 0;
  double sigma = 0.0;
  bool converged = false;
  std::vector<SigmaCvEntry> cv_table;
};

inline void require_positive_sigma(double sigma) {
  if (!(sigma > 0)) throw ConfigError("gaussian kernel: sigma must be > 0");
}

inline double gaussian_kernel(double y, double y2, double sigma) {
  require_positive_sigma(sigma);
  const double r = y - y2;
  return std::exp(-r * r / (2.0 * sigma * sigma));
}

namespace detail {

// Pairs farther apart than this many bandwidths contribute less than
// exp(-50) per kernel term and are skipped.
inline constexpr double kKernelCutoff = 10.0;

// Squared-MMD sums over sorted samples, visiting only pairs within the
// kernel cutoff. Summation order depends only on the inputs.
class KernelSums {
 public:
  KernelSums(std::span<const double> targets, double sigma)
      : sigma_(sigma), inv_(1.0 / (2.0 * sigma * sigma)), radius_(kKernelCutoff * sigma),
        targets_(targets.begin(), targets.end()) {
    require_positive_sigma(sigma);
    std::sort(targets_.begin(), targets_.end());
    target_self_ = self_sum(targets_, nullptr);
  }

  /// Loss for predictions `pred`. If `grad` is non-null it receives
  /// dLoss/dpred_j.
  double evaluate(std::span<const double> pred, Vector* grad) const {
    const std::size_t n = pred.size();
    require_shape(n == targets_.size(), "mmd2: " + std::to_string(n) + " predictions vs " +
                                            std::to_string(targets_.size()) + " targets");
    require_shape(n > 0, "mmd2: empty sample");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return pred[a] < pred[b]; });
    Vector sorted(n);
    for (std::size_t i = 0; i < n; ++i) sorted[i] = pred[order[i]];

    Vector self_terms, cross_terms;
    if (grad) {
      self_terms.assign(n, 0.0);
      cross_terms.assign(n, 0.0);
    }
    const double pp = self_sum(sorted, grad ? &self_terms : nullptr);

    double yp = 0.0;
    auto lo = targets_.begin();
    for (std::size_t j = 0; j < n; ++j) {
      const double p = sorted[j];
      while (lo != targets_.end() && *lo < p - radius_) ++lo;
      double row = 0.0, wrow = 0.0;
      for (auto it = lo; it != targets_.end() && *it <= p + radius_; ++it) {
        const double r = *it - p;
        const double k = std::exp(-r * r * inv_);
        row += k;
        wrow += k * r;
      }
      yp += row;
      if (grad) cross_terms[j] = wrow;
    }

    const double n2 = static_cast<double>(n) * static_cast<double>(n);
    if (grad) {
      grad->assign(n, 0.0);
      const double scale = -2.0 / (n2 * sigma_ * sigma_);
      for (std::size_t j = 0; j < n; ++j)
        (*grad)[order[j]] = scale * (cross_terms[j] + self_terms[j]);
    }
    return (pp - 2.0 * yp + target_self_) / n2;
  }

 private:
  // Sum of K over all ordered pairs of a sorted sample, diagonal included.
  // With `terms`, also accumulates sum_b K(a,b)(a - b) per element.
  double self_sum(std::span<const double> sorted, Vector* terms) const {
    const std::size_t n = sorted.size();
    double off = 0.0;
    for (std::size_t a = 0; a < n; ++a) {
      double row = 0.0;
      for (std::size_t b = a + 1; b < n && sorted[b] - sorted[a] <= radius_; ++b) {
        const double r = sorted[a] - sorted[b];
        const double k = std::exp(-r * r * inv_);
        row += k;
        if (terms) {
          (*terms)[a] += k * r;
          (*terms)[b] -= k * r;
        }
      }
      off += row;
    }
    return static_cast<double>(n) + 2.0 * off;
  }

  double sigma_;
  double inv_;
  double radius_;
  Vector targets_;
  double target_self_ = 0.0;
};

}  // namespace detail

/// Biased (V-statistic) squared MMD with all diagonal terms kept:
/// (1/n^2) [sum K(p_i,p_j) - 2 sum K(y_i,p_j) + sum K(y_i,y_j)].
inline double mmd2_loss(std::span<const double> y_pred, std::span<const double> y_true,
                        double sigma) {
  require_shape(y_pred.size() == y_true.size(),
                "mmd2_loss: " + std::to_string(y_pred.size()) + " predictions vs " +
                    std::to_string(y_true.size()) + " targets");
  return detail::KernelSums(y_true, sigma).evaluate(y_pred, nullptr);
}

/// dL/dc_k = -1/(n^2 sigma^2) [ 2 sum_ij K(y_i,p_j)(y_i-p_j) phi_k(z_j)
///                             + sum_ij K(p_i,p_j)(p_i-p_j)(phi_k(z_i)-phi_k(z_j)) ]
/// with p = design * coefficients.
inline Vector mmd2_gradient(std::span<const double> coefficients, const Matrix& design,
                            std::span<const double> y_true, double sigma) {
  require_shape(design.cols() == coefficients.size(),
                "mmd2_gradient: design has " + std::to_string(design.cols()) + " columns, " +
                    std::to_string(coefficients.size()) + " coefficients");
  require_shape(design.rows() == y_true.size(), "mmd2_gradient: design rows != targets");
  require_shape(design.rows() > 0, "mmd2_gradient: empty sample");
  require_positive_sigma(sigma);
  const Vector pred = matvec(design, coefficients);
  Vector gp;
  detail::KernelSums(y_true, sigma).evaluate(pred, &gp);
  Vector g(coefficients.size(), 0.0);
  for (std::size_t i = 0; i < design.rows(); ++i) {
    auto row = design.row(i);
    for (std::size_t k = 0; k < g.size(); ++k) g[k] += gp[i] * row[k];
  }
  return g;
}

struct MmdFitResult {
  Vector coefficients;
  FitTrace trace;
};

/// Adam on the squared MMD starting from the configured initializer. Stops
/// after max_iterations steps or when the loss changes by less than the
/// tolerance; returns the iterate with the lowest recorded loss.
inline MmdFitResult fit_mmd(const Matrix& design, std::span<const double> y_true, double sigma,
                            const MmdFitConfig& config) {
  require_shape(design.rows() > 0 && design.cols() > 0, "fit_mmd: empty design");
  require_shape(design.rows() == y_true.size(), "fit_mmd: design rows != targets");
  require_positive_sigma(sigma);
  config.validate();

  Vector c = config.init == MmdInit::ols ? ols_fit(design, y_true, config.ridge)
                                         : Vector(design.cols(), 0.0);
  MmdFitResult result{c, {}};
  result.trace.sigma = sigma;

  const detail::KernelSums sums(y_true, sigma);
  AdamState adam(c.size(), AdamOptions{config.step_size});
  double best = std::numeric_limits<double>::infinity();
  Vector gp;

  for (std::size_t it = 0;; ++it) {
    const Vector pred = matvec(design, c);
    const double loss = sums.evaluate(pred, &gp);
    if (!std::isfinite(loss))
      throw NumericError("fit_mmd: non-finite loss at iteration " + std::to_string(it));
    result.trace.losses.push_back(loss);
    if (loss < best) {
      best = loss;
      result.coefficients = c;
      result.trace.best_iteration = it;
    }
    if (it > 0 && std::abs(loss - result.trace.losses[it - 1]) < config.tolerance) {
      result.trace.converged = true;
      break;
    }
    if (it == config.max_iterations) break;

    Vector g(c.size(), 0.0);
    for (std::size_t i = 0; i < design.rows(); ++i) {
      auto row = design.row(i);
      for (std::size_t k = 0; k < g.size(); ++k) g[k] += gp[i] * row[k];
    }
    adam_update(adam, c, g);
  }
  return result;
}

inline constexpr double kVarianceFloor = 1e-12;

/// sum_i (y_i - mean_i)^2 / max(var_i, 1e-12). Negative or non-finite
/// variances are rejected.
inline double cv_loss(std::span<const double> y_val, std::span<const double> cond_means,
                      std::span<const double> cond_vars) {
  require_shape(y_val.size() == cond_means.size() && y_val.size() == cond_vars.size(),
                "cv_loss: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < y_val.size(); ++i) {
    if (!(cond_vars[i] >= 0) || !std::isfinite(cond_vars[i]))
      throw NumericError("cv_loss: invalid conditional variance at index " + std::to_string(i));
    const double r = y_val[i] - cond_means[i];
    s += r * r / std::max(cond_vars[i], kVarianceFloor);
  }
  return s;
}

/// Index of the smallest loss; ties go to the smaller sigma, then to the
/// earlier entry. Entries without a loss are skipped.
inline std::optional<std::size_t> argmin_sigma(const std::vector<SigmaCvEntry>& table) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (!table[i].cv_loss) continue;
    if (!best) {
      best = i;
      continue;
    }
    const auto& b = table[*best];
    const double li = *table[i].cv_loss, lb = *b.cv_loss;
    if (li < lb || (li == lb && table[i].sigma < b.sigma)) best = i;
  }
  return best;
}

struct ValidationSet {
  const std::vector<LatentPosterior>* posteriors = nullptr;
  std::span<const double> targets;
};

struct SigmaSelection {
  double sigma = 0.0;
  std::vector<SigmaCvEntry> table;
  MmdFitResult fit;  // the fit at the selected sigma
};

/// Fits one model per candidate sigma on the training design and scores it
/// with cv_loss on the validation posteriors. `method_for` maps a model to
/// the integration method used for its conditional moments.
template <typename MethodFor>
SigmaSelection select_sigma(std::span<const double> candidates, const Matrix& train_design,
                            std::span<const double> train_y, const PceBasis& basis,
                            const ValidationSet& val, const MmdFitConfig& config,
                            MethodFor&& method_for) {
  if (candidates.empty()) throw ConfigError("select_sigma: no candidate sigma values");
  require_shape(val.posteriors != nullptr && val.posteriors->size() == val.targets.size(),
                "select_sigma: validation posteriors and targets differ in length");
  SigmaSelection sel;
  std::vector<MmdFitResult> fits;
  for (double sigma : candidates) {
    SigmaCvEntry entry{sigma, std::nullopt, {}};
    try {
      MmdFitResult fit = fit_mmd(train_design, train_y, sigma, config);
      const PceModel model = make_model(basis, fit.coefficients);
      const MomentMethod method = method_for(model);
      Vector means, vars;
      for (const auto& post : *val.posteriors) {
        const MeanVar mv = conditional_mean_var(model, post, method);
        means.push_back(mv.mean);
        vars.push_back(mv.variance);
      }
      entry.cv_loss = cv_loss(val.targets, means, vars);
      if (!std::isfinite(*entry.cv_loss)) {
        entry.error = "non-finite CV loss";
        entry.cv_loss.reset();
      }
      fits.push_back(std::move(fit));
    } catch (const Error& e) {
      entry.error = e.what();
      fits.emplace_back();
    }
    sel.table.push_back(std::move(entry));
  }
  const auto best = argmin_sigma(sel.table);
  if (!best) {
    std::string msg = "select_sigma: every candidate failed:";
    for (const auto& e : sel.table) msg += " [sigma=" + std::to_string(e.sigma) + ": " + e.error + "]";
    throw NumericError(msg);
  }
  sel.sigma = sel.table[*best].sigma;
  sel.fit = std::move(fits[*best]);
  sel.fit.trace.cv_table = sel.table;
  return sel;
}

}  // namespace pcenet
