#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "exmarket/alias_table.hpp"
#include "exmarket/rng.hpp"

using namespace exmarket;

namespace {

double chi_square(const std::vector<double>& w, const std::vector<long>& counts, long n) {
  double total = 0.0;
  for (double x : w) total += x;
  double chi = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double e = n * w[i] / total;
    if (e > 0.0) chi += (counts[i] - e) * (counts[i] - e) / e;
  }
  return chi;
}

}  // namespace

TEST(AliasTable, MatchesWeights) {
  const std::vector<double> w{1.0, 3.0, 0.5, 0.0, 5.5};
  AliasTable t(w);
  EXPECT_DOUBLE_EQ(t.total(), 10.0);
  EXPECT_DOUBLE_EQ(t.weight_fraction(1), 0.3);
  auto rng = make_stream(1, 0, Purpose::kSelection);
  std::vector<long> counts(w.size(), 0);
  const long N = 1'000'000;
  for (long i = 0; i < N; ++i) ++counts[t.sample(rng)];
  EXPECT_EQ(counts[3], 0);
  // 4 dof among the nonzero cells; 0.999 quantile 18.47
  EXPECT_LT(chi_square(w, counts, N), 18.47);
}

TEST(AliasTable, UniformFastPath) {
  const std::vector<double> w(5, 2.0);
  AliasTable t(w);
  auto rng = make_stream(2, 0, Purpose::kSelection);
  std::vector<long> counts(5, 0);
  const long N = 500'000;
  for (long i = 0; i < N; ++i) ++counts[t.sample(rng)];
  EXPECT_LT(chi_square(w, counts, N), 18.47);
}

TEST(AliasTable, SingleAndEmpty) {
  const std::vector<double> one{4.0};
  AliasTable t(one);
  auto rng = make_stream(3, 0, Purpose::kSelection);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(t.sample(rng), 0u);
  const std::vector<double> zeros{0.0, 0.0};
  EXPECT_TRUE(AliasTable(zeros).empty());
  const std::vector<double> bad{1.0, -1.0};
  EXPECT_THROW(AliasTable{bad}, std::invalid_argument);
}

TEST(AliasTable, ManySkewedWeights) {
  std::vector<double> w;
  auto g = make_stream(4, 0, Purpose::kInitial);
  for (int i = 0; i < 200; ++i) w.push_back(std::pow(uniform01(g), 4.0));
  AliasTable t(w);
  auto rng = make_stream(4, 1, Purpose::kSelection);
  std::vector<long> counts(w.size(), 0);
  const long N = 4'000'000;
  for (long i = 0; i < N; ++i) ++counts[t.sample(rng)];
  // 199 dof: mean 199, sd ~20; allow 5 sd
  EXPECT_LT(chi_square(w, counts, N), 199.0 + 5.0 * std::sqrt(2.0 * 199.0));
}

TEST(IndexSet, InsertErasePick) {
  IndexSet s(10);
  s.insert(3);
  s.insert(7);
  s.insert(3);
  EXPECT_EQ(s.size(), 2u);
  EXPECT_TRUE(s.contains(7));
  s.erase(3);
  s.erase(3);
  EXPECT_EQ(s.size(), 1u);
  EXPECT_FALSE(s.contains(3));
  auto rng = make_stream(5, 0, Purpose::kSelection);
  for (int i = 0; i < 20; ++i) EXPECT_EQ(s.pick(rng), 7u);
  for (std::size_t i = 0; i < 10; ++i) s.insert(i);
  std::vector<int> counts(10, 0);
  for (int i = 0; i < 100000; ++i) ++counts[s.pick(rng)];
  for (int c : counts) EXPECT_NEAR(c, 10000, 600);
}
