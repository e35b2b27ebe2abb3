#pragma once

// CSV ingestion, min-max feature scaling and seeded train/validation/test
// splitting.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pcenet/errors.hpp"
#include "pcenet/nncore.hpp"
#include "pcenet/rng.hpp"

namespace pcenet {

struct ScalerParams {
  Vector min;
  Vector max;

  bool operator==(const ScalerParams&) const = default;
};

struct Dataset {
  Matrix features;  // n x m
  Vector targets;   // n
  std::vector<std::string> feature_names;
  std::optional<ScalerParams> scaler;

  std::size_t size() const noexcept { return targets.size(); }
  std::size_t input_dim() const noexcept { return features.cols(); }
};

namespace detail {

inline std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline std::optional<double> parse_double(const std::string& s) {
  double v = 0.0;
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  if (begin != end && *begin == '+') ++begin;
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end || begin == end) return std::nullopt;
  return v;
}

}  // namespace detail

/// Reads a header-first, comma-separated numeric CSV. `target_column` is a
/// header name, or a zero-based column index when no header matches it.
/// Row numbers in error messages are 1-based data rows (header excluded).
inline Dataset load_csv(const std::string& path, const std::string& target_column) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open CSV file '" + path + "'");

  std::string line;
  if (!std::getline(in, line) || detail::trim(line).empty())
    throw DataError("CSV file '" + path + "' is empty");
  const auto header = detail::split_csv_line(line);

  std::size_t target = header.size();
  for (std::size_t c = 0; c < header.size(); ++c)
    if (header[c] == target_column) target = c;
  if (target == header.size()) {
    std::size_t idx = 0;
    auto [ptr, ec] = std::from_chars(target_column.data(),
                                     target_column.data() + target_column.size(), idx);
    if (ec == std::errc() && ptr == target_column.data() + target_column.size() &&
        idx < header.size())
      target = idx;
  }
  if (target == header.size())
    throw ConfigError("target column '" + target_column + "' not found in '" + path + "'");

  Dataset ds;
  for (std::size_t c = 0; c < header.size(); ++c)
    if (c != target) ds.feature_names.push_back(header[c]);

  const std::size_t m = header.size() - 1;
  std::vector<double> feats;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    ++row;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size())
      throw ParseError("row " + std::to_string(row) + ": expected " +
                       std::to_string(header.size()) + " cells, got " +
                       std::to_string(cells.size()));
    for (std::size_t c = 0; c < cells.size(); ++c) {
      auto v = detail::parse_double(cells[c]);
      if (!v || !std::isfinite(*v))
        throw ParseError("row " + std::to_string(row) + ", column " + std::to_string(c + 1) +
                         " ('" + header[c] + "'): non-numeric cell '" + cells[c] + "'");
      if (c == target)
        ds.targets.push_back(*v);
      else
        feats.push_back(*v);
    }
  }
  if (row == 0) throw DataError("CSV file '" + path + "' has no data rows");
  ds.features = Matrix(row, m, std::move(feats));
  return ds;
}

inline ScalerParams fit_minmax(const Matrix& features) {
  ScalerParams s{Vector(features.cols(), 0.0), Vector(features.cols(), 0.0)};
  for (std::size_t c = 0; c < features.cols(); ++c) {
    double lo = INFINITY, hi = -INFINITY;
    for (std::size_t r = 0; r < features.rows(); ++r) {
      lo = std::min(lo, features(r, c));
      hi = std::max(hi, features(r, c));
    }
    if (features.rows() == 0) lo = hi = 0.0;
    s.min[c] = lo;
    s.max[c] = hi;
  }
  return s;
}

/// (x - min) / (max - min); constant columns map to 0.
inline Matrix apply_scaler(const ScalerParams& s, const Matrix& features) {
  require_shape(s.min.size() == features.cols(), "scaler: column count mismatch");
  Matrix out(features.rows(), features.cols());
  for (std::size_t r = 0; r < features.rows(); ++r)
    for (std::size_t c = 0; c < features.cols(); ++c) {
      const double range = s.max[c] - s.min[c];
      out(r, c) = range > 0 ? (features(r, c) - s.min[c]) / range : 0.0;
    }
  return out;
}

inline Matrix inverse_scale(const ScalerParams& s, const Matrix& scaled) {
  require_shape(s.min.size() == scaled.cols(), "scaler: column count mismatch");
  Matrix out(scaled.rows(), scaled.cols());
  for (std::size_t r = 0; r < scaled.rows(); ++r)
    for (std::size_t c = 0; c < scaled.cols(); ++c)
      out(r, c) = s.min[c] + scaled(r, c) * (s.max[c] - s.min[c]);
  return out;
}

/// Scales features into [0,1] and attaches the scaler. Targets untouched.
inline Dataset minmax_scale(Dataset ds) {
  ScalerParams s = fit_minmax(ds.features);
  ds.features = apply_scaler(s, ds.features);
  ds.scaler = std::move(s);
  return ds;
}

struct SplitRatios {
  double train = 0.81;
  double validation = 0.09;
  double test = 0.10;
};

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
  std::uint64_t seed = 0;

  bool operator==(const SplitIndices&) const = default;
};

/// Seeded permutation cut into floor-sized validation and test blocks; the
/// remainder goes to train.
inline SplitIndices split(std::size_t n, SplitRatios ratios, std::uint64_t seed) {
  if (ratios.train < 0 || ratios.validation < 0 || ratios.test < 0 ||
      std::abs(ratios.train + ratios.validation + ratios.test - 1.0) > 1e-9)
    throw ConfigError("split ratios must be nonnegative and sum to 1");

  const auto n_val = static_cast<std::size_t>(std::floor(ratios.validation * n + 1e-9));
  const auto n_test = static_cast<std::size_t>(std::floor(ratios.test * n + 1e-9));
  const std::size_t n_train = n - std::min(n, n_val + n_test);
  auto check = [&](double ratio, std::size_t size, const char* name) {
    if (ratio > 0 && size == 0)
      throw DataError(std::string("split: ") + name + " set is empty for n=" +
                      std::to_string(n));
  };
  check(ratios.train, n_train, "train");
  check(ratios.validation, n_val, "validation");
  check(ratios.test, n_test, "test");

  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);

  SplitIndices s;
  s.seed = seed;
  s.train.assign(perm.begin(), perm.begin() + n_train);
  s.validation.assign(perm.begin() + n_train, perm.begin() + n_train + n_val);
  s.test.assign(perm.begin() + n_train + n_val, perm.end());
  return s;
}

}  // namespace pcenet
