#pragma once

// Test-set diagnostics: relative generalization error, standardized
// residuals and density histograms.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <span>
#include <vector>

#include "pcenet/errors.hpp"
#include "pcenet/nncore.hpp"

namespace pcenet {

/// sum (y_i - mean_i)^2 / sum (y_i - ybar)^2 with ybar the mean of y_true.
/// Equals 1 for the constant mean predictor.
inline double relative_generalization_error(std::span<const double> y_true,
                                            std::span<const double> cond_means) {
  require_shape(y_true.size() == cond_means.size(), "epsilon_gen: length mismatch");
  require_shape(!y_true.empty(), "epsilon_gen: empty test set");
  double ybar = 0.0;
  for (double y : y_true) ybar += y;
  ybar /= static_cast<double>(y_true.size());
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    num += (y_true[i] - cond_means[i]) * (y_true[i] - cond_means[i]);
    den += (y_true[i] - ybar) * (y_true[i] - ybar);
  }
  if (den == 0.0) throw NumericError("epsilon_gen: all test targets are equal");
  return num / den;
}

inline Vector standardized_residuals(std::span<const double> y_true,
                                     std::span<const double> cond_means,
                                     std::span<const double> cond_vars) {
  require_shape(y_true.size() == cond_means.size() && y_true.size() == cond_vars.size(),
                "standardized_residuals: length mismatch");
  Vector r(y_true.size());
  for (std::size_t i = 0; i < r.size(); ++i)
    r[i] = (y_true[i] - cond_means[i]) / std::sqrt(cond_vars[i]);
  return r;
}

struct Histogram {
  Vector edges;      // bin_count + 1
  Vector densities;  // bin_count

  double width() const { return edges.size() > 1 ? edges[1] - edges[0] : 0.0; }
};

inline constexpr double kMinBinWidth = 1e-12;

/// Equal-width bins over [min, max] (last bin closed), normalized so that
/// sum(density * width) = 1.
inline Histogram histogram_density(std::span<const double> values, std::size_t bin_count) {
  if (bin_count == 0) throw ConfigError("histogram: bin_count must be >= 1");
  if (values.empty()) throw DataError("histogram: no values");
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it;
  const double width = std::max((*hi_it - lo) / static_cast<double>(bin_count), kMinBinWidth);

  Histogram h{Vector(bin_count + 1), Vector(bin_count, 0.0)};
  for (std::size_t b = 0; b <= bin_count; ++b) h.edges[b] = lo + width * static_cast<double>(b);
  for (double v : values) {
    auto b = static_cast<std::size_t>(std::floor((v - lo) / width));
    h.densities[std::min(b, bin_count - 1)] += 1.0;
  }
  const double norm = 1.0 / (static_cast<double>(values.size()) * width);
  for (auto& d : h.densities) d *= norm;
  return h;
}

inline void write_histogram_csv(std::ostream& out, const Histogram& h) {
  out << "edge_low,edge_high,density\n";
  const auto old = out.precision(17);
  for (std::size_t b = 0; b < h.densities.size(); ++b)
    out << h.edges[b] << ',' << h.edges[b + 1] << ',' << h.densities[b] << '\n';
  out.precision(old);
}

struct EvalReport {
  double epsilon_gen = 0.0;
  Vector residuals;
  Histogram histogram;
  std::uint64_t trial_seed = 0;
  Vector cond_means;
  Vector cond_vars;
};

inline double fraction_within(std::span<const double> values, double bound) {
  if (values.empty()) return 0.0;
  std::size_t k = 0;
  for (double v : values)
    if (std::abs(v) <= bound) ++k;
  return static_cast<double>(k) / static_cast<double>(values.size());
}

/// Linear-interpolated quantile (type 7) of an unsorted sample.
inline double quantile(std::vector<double> v, double p) {
  if (v.empty()) throw DataError("quantile: empty sample");
  std::sort(v.begin(), v.end());
  const double pos = p * static_cast<double>(v.size() - 1);
  const auto i = static_cast<std::size_t>(std::floor(pos));
  if (i + 1 >= v.size()) return v.back();
  return v[i] + (pos - static_cast<double>(i)) * (v[i + 1] - v[i]);
}

}  // namespace pcenet
