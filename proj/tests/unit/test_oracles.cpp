#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

namespace {

oracle::Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd;
  oracle::Matrix m(rows, std::vector<double>(cols));
  for (auto& r : m)
    for (auto& v : r) v = nd(gen);
  return m;
}

std::vector<std::uint32_t> blocks(std::uint32_t classes, std::uint32_t per_class) {
  std::vector<std::uint32_t> l;
  for (std::uint32_t c = 0; c < classes; ++c) l.insert(l.end(), per_class, c);
  return l;
}

}  // namespace

TEST(OracleSelfCheck, TripletCountsForTenByTwenty) {
  const auto emb = random_matrix(200, 3, 1);
  const auto labels = blocks(10, 20);
  // 10 classes * C(20, 2) pairs = 1900; each pairs with 180 negatives.
  EXPECT_EQ(oracle::offline_hardest(emb, labels).size(), 1900u);
  EXPECT_EQ(oracle::offline_triplets(emb, labels).size(), 1900u * 180u);
}

TEST(OracleSelfCheck, HardestIsSubsetOfAllValid) {
  const auto emb = random_matrix(30, 2, 2);
  std::vector<std::uint32_t> labels;
  for (std::uint32_t i = 0; i < 30; ++i) labels.push_back(i % 4);
  const auto all = oracle::offline_triplets(emb, labels);
  for (const auto& t : oracle::offline_hardest(emb, labels)) {
    EXPECT_TRUE(std::binary_search(all.begin(), all.end(), t));
  }
}

TEST(OracleSelfCheck, KlEstimateErrorShrinksWithDraws) {
  const oracle::Matrix mu = {{0.5, -0.3}};
  const oracle::Matrix lv = {{0.2, -0.4}};
  const auto small = oracle::mc_kl(mu, lv, 1000, 3);
  const auto large = oracle::mc_kl(mu, lv, 100000, 3);
  // Standard error scales as 1/sqrt(n): a factor of 10 here.
  EXPECT_NEAR(small.std_error / large.std_error, 10.0, 1.5);
  // Closed form for reference: 1/2 sum(mu^2 + e^lv - 1 - lv).
  double closed = 0.0;
  for (std::size_t j = 0; j < 2; ++j) closed += 0.5 * (mu[0][j] * mu[0][j] + std::exp(lv[0][j]) - 1.0 - lv[0][j]);
  EXPECT_NEAR(large.mean, closed, 4.0 * large.std_error);
}

TEST(OracleSelfCheck, KlOfPriorIsZero) {
  const auto e = oracle::mc_kl({{0.0, 0.0}}, {{0.0, 0.0}}, 100, 4);
  EXPECT_NEAR(e.mean, 0.0, 1e-12);
}

TEST(OracleSelfCheck, ClassifyLogsTies) {
  const oracle::Matrix attrs = {{0.0}, {1.0}, {-1.0}};
  std::vector<std::string> log;
  EXPECT_EQ(oracle::exhaustive_classify({0.0}, attrs, {2, 1}, &log), 1u);
  EXPECT_EQ(log.size(), 1u);
  log.clear();
  EXPECT_EQ(oracle::exhaustive_classify({0.1}, attrs, {0}, &log), 0u);
  EXPECT_TRUE(log.empty());
}

TEST(OracleSelfCheck, TallyAccuracySkipsEmptyClasses) {
  EXPECT_DOUBLE_EQ(oracle::tally_accuracy({0, 1, 1}, {0, 1, 0}, {0, 1, 9}), 75.0);
}

TEST(OracleSelfCheck, CentersConvergeToMeans) {
  const auto emb = random_matrix(8, 2, 5);
  const auto labels = blocks(2, 4);
  const auto means = oracle::class_means(emb, labels, 2);
  const auto c = oracle::iterate_centers({{9.0, 9.0}, {0.0, 0.0}}, {true, false}, emb, labels, 0.5, 60);
  for (std::size_t k = 0; k < 2; ++k)
    for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(c[k][j], means[k][j], 1e-12);
}

TEST(OracleSelfCheck, NumericGradientOfQuadratic) {
  const auto g = oracle::numeric_gradient([](const std::vector<double>& x) { return x[0] * x[0] + 3.0 * x[1]; },
                                          {2.0, -1.0}, 1e-5);
  EXPECT_NEAR(g[0], 4.0, 1e-8);
  EXPECT_NEAR(g[1], 3.0, 1e-8);
}

TEST(OracleSelfCheck, DigestDependsOnBits) {
  EXPECT_EQ(oracle::digest({1.0, 2.0}), oracle::digest({1.0, 2.0}));
  EXPECT_NE(oracle::digest({1.0, 2.0}), oracle::digest({2.0, 1.0}));
  EXPECT_NE(oracle::digest({0.0}), oracle::digest({-0.0}));
  EXPECT_EQ(oracle::digest({}).size(), 16u);
}

TEST(OracleSelfCheck, CompareToleranceKinds) {
  EXPECT_TRUE(oracle::compare("abs", {}, 1.0, 1.005, 0.01, false).pass);
  EXPECT_FALSE(oracle::compare("abs", {}, 1.0, 1.02, 0.01, false).pass);
  EXPECT_TRUE(oracle::compare("rel", {}, 1000.0, 1005.0, 0.01, true).pass);
  EXPECT_FALSE(oracle::compare("rel", {}, 1000.0, 1020.0, 0.01, true).pass);
}
