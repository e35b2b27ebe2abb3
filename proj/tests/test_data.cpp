#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "pcenet/data.hpp"

using namespace pcenet;
namespace fs = std::filesystem;

namespace {

std::string temp_csv(const std::string& name, const std::string& body) {
  const fs::path p = fs::temp_directory_path() / ("pcenet_test_" + name + ".csv");
  std::ofstream(p) << body;
  return p.string();
}

}  // namespace

TEST(LoadCsv, ByNameAndIndex) {
  const auto path = temp_csv("abc", "a,b,y\n1,2,3\n4,5,6\n7,8,9\n");
  const Dataset ds = load_csv(path, "y");
  EXPECT_EQ(ds.size(), 3u);
  EXPECT_EQ(ds.input_dim(), 2u);
  EXPECT_EQ(ds.feature_names, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(ds.targets, (Vector{3, 6, 9}));
  EXPECT_EQ(ds.features(2, 1), 8.0);

  const Dataset by_index = load_csv(path, "0");
  EXPECT_EQ(by_index.targets, (Vector{1, 4, 7}));
  EXPECT_EQ(by_index.feature_names, (std::vector<std::string>{"b", "y"}));
}

TEST(LoadCsv, MissingTargetNamesColumn) {
  const auto path = temp_csv("missing", "a,b\n1,2\n");
  try {
    load_csv(path, "price");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("price"), std::string::npos);
  }
}

TEST(LoadCsv, NonNumericCellCitesRow) {
  const auto path = temp_csv("abc_cell", "a,b,y\n1,2,3\nabc,5,6\n");
  try {
    load_csv(path, "y");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("row 2"), std::string::npos) << e.what();
  }
}

TEST(LoadCsv, EmptyFile) {
  EXPECT_THROW(load_csv(temp_csv("empty", ""), "y"), DataError);
  EXPECT_THROW(load_csv(temp_csv("header_only", "a,y\n"), "y"), DataError);
}

TEST(MinMax, Examples) {
  Dataset ds;
  ds.features = Matrix{{0, 7}, {5, 7}, {10, 7}};
  ds.targets = {1, 2, 3};
  const Dataset s = minmax_scale(ds);
  EXPECT_EQ(s.features(0, 0), 0.0);
  EXPECT_EQ(s.features(1, 0), 0.5);
  EXPECT_EQ(s.features(2, 0), 1.0);
  for (std::size_t r = 0; r < 3; ++r) EXPECT_EQ(s.features(r, 1), 0.0);
  EXPECT_EQ(s.targets, ds.targets);
  ASSERT_TRUE(s.scaler);
  EXPECT_EQ(apply_scaler(*s.scaler, ds.features), s.features);
}

TEST(MinMax, InverseAndRange) {
  Rng rng(11);
  Matrix x(40, 5);
  for (auto& v : x.data()) v = 100.0 * standard_normal(rng) + 3.0;
  const ScalerParams sc = fit_minmax(x);
  const Matrix s = apply_scaler(sc, x);
  for (double v : s.data()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  const Matrix back = inverse_scale(sc, s);
  for (std::size_t i = 0; i < x.data().size(); ++i)
    EXPECT_LE(std::abs(back.data()[i] - x.data()[i]), 1e-12 * std::abs(x.data()[i]) + 1e-12);
}

TEST(Split, Examples) {
  const SplitIndices s = split(10, SplitRatios{0.8, 0.1, 0.1}, 0);
  EXPECT_EQ(s.train.size(), 8u);
  EXPECT_EQ(s.validation.size(), 1u);
  EXPECT_EQ(s.test.size(), 1u);

  const SplitIndices all = split(5, SplitRatios{1.0, 0.0, 0.0}, 3);
  EXPECT_EQ(all.train.size(), 5u);
  EXPECT_TRUE(all.validation.empty());
  EXPECT_TRUE(all.test.empty());

  EXPECT_EQ(split(100, SplitRatios{}, 9), split(100, SplitRatios{}, 9));
  EXPECT_NE(split(100, SplitRatios{}, 9).train, split(100, SplitRatios{}, 10).train);
}

TEST(Split, Errors) {
  EXPECT_THROW(split(5, SplitRatios{0.81, 0.09, 0.10}, 0), DataError);
  EXPECT_THROW(split(10, SplitRatios{0.5, 0.1, 0.1}, 0), ConfigError);
}

TEST(Split, PartitionProperty) {
  Rng rng(77);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t n = 3 + rng() % 400;
    const SplitRatios r = rep % 2 ? SplitRatios{1.0 / 3, 1.0 / 3, 1.0 / 3} : SplitRatios{0.6, 0.2, 0.2};
    const SplitIndices s = split(n, r, rng());
    std::set<std::size_t> seen;
    for (const auto* part : {&s.train, &s.validation, &s.test})
      for (auto i : *part) {
        EXPECT_LT(i, n);
        EXPECT_TRUE(seen.insert(i).second) << "duplicate index " << i;
      }
    EXPECT_EQ(seen.size(), n);
  }
}
