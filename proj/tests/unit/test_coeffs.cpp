#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "exmarket/coeffs.hpp"

using namespace exmarket;

namespace {

AgentParams noise(double gamma_sq, double beta, double p, double eta, double lambda_bar = 0.0) {
  AgentParams a;
  a.gamma_sq = gamma_sq;
  a.beta = beta;
  a.p = p;
  a.eta = eta;
  a.lambda_bar = lambda_bar;
  return a;
}

LimitParams homogeneous_limit() {
  // agent beta = 1 corresponds to limit beta = 1/2
  LimitParams l;
  l.beta = 0.5;
  l.gamma = 1.0;
  l.eta = 1.0;
  l.p = 0.6;
  l.lambda_n = 1.0;
  l.c_e = 2.0;
  l.sigma_xi = 1.0;
  l.fundamental_value = 50.0;
  return l;
}

}  // namespace

TEST(Bn, Examples) {
  const auto hom = [](std::size_t n) { return Population::homogeneous(noise(1, 1, 0.6, 1), n); };
  for (std::size_t n : {1u, 10u, 1000u}) EXPECT_NEAR(b_n(hom(n), 0.5), 0.05, 1e-12);
  EXPECT_NEAR(b_n(hom(10), 0.6), 0.0, 1e-15);
  EXPECT_NEAR(b_n(Population::homogeneous(noise(1, 0, 0.6, 1), 10), 0.3), 0.0, 1e-15);
  EXPECT_THROW(b_n(hom(10), 1.5), ValidationError);
}

TEST(CnSq, Examples) {
  const auto pop = Population::homogeneous(noise(1, 1, 0.6, 1), 10);
  EXPECT_NEAR(c_n_sq(pop, 0.5), 0.0875, 1e-15);
  const auto pop0 = Population::homogeneous(noise(1, 0, 0.6, 1), 10);
  EXPECT_EQ(c_n_sq(pop0, 0.0), 0.0);
  EXPECT_EQ(c_n_sq(pop0, 1.0), 0.0);
  EXPECT_NEAR(c_n_sq(Population::homogeneous(noise(1, 1, 0.6, 1), 10'000'000), 0.5), 0.0625, 1e-7);
}

TEST(CnSq, ClosedFormGap) {
  const auto l = homogeneous_limit();
  for (std::size_t n : {10u, 100u, 1000u}) {
    const auto pop = Population::homogeneous(noise(1, 1, 0.6, 1), n);
    for (double v : {0.0, 0.2, 0.5, 0.9, 1.0}) {
      const double gap = c_n_sq(pop, v) - limit_coeffs(l, 50.0, v).c_sq;
      EXPECT_NEAR(gap, (0.6 - 2 * v * 0.6 + v) / (2.0 * n), 1e-12);
    }
  }
}

TEST(Transition, MatrixStructure) {
  std::vector<AgentParams> agents;
  for (int i = 0; i < 9; ++i) agents.push_back(noise(0.5 + i, 0.1 * i, 0.1 * i, 0.1 * (9 - i)));
  const auto pop = Population::from_agents(agents);
  for (double v : {0.0, 0.3, 0.77, 1.0}) {
    const auto t = transition_coefficients(pop, v);
    EXPECT_EQ(t.b1, -t.b2);
    EXPECT_EQ(t.c1, t.c2);
    EXPECT_EQ(t.c12, -t.c2);
    EXPECT_EQ(t.c21, -t.c2);
    EXPECT_GE(t.c2, 0.0);
  }
}

TEST(Zn, Examples) {
  MarketParams m;
  m.fundamental_value = 50.0;
  const Population pop({{AgentParams::fundamentalist_trader(1, 1), 2}, {noise(1, 1, 0.5, 1, 3.0), 8}});
  EXPECT_DOUBLE_EQ(z_n(pop, m, 40.0), 2.0);
  EXPECT_EQ(z_n(pop, m, 50.0), 0.0);
  EXPECT_EQ(z_n(Population::homogeneous(noise(1, 1, 0.5, 1, 3.0), 10), m, 40.0), 0.0);
}

TEST(SigmaSq, Examples) {
  MarketParams m;
  m.fundamental_value = 50.0;
  m.sigma_xi = 1.0;
  m.c_e = 2.0;
  const Population mixed({{AgentParams::fundamentalist_trader(1, 1), 2}, {noise(1, 1, 0.5, 1, 1.0), 8}});
  EXPECT_EQ(sigma_n_sq(mixed, m, 50.0, 0.0), 0.0);
  EXPECT_EQ(sigma_n_sq(mixed, m, 50.0, 1.0), 0.0);
  const auto hom = Population::homogeneous(noise(1, 1, 0.5, 1, 1.0), 1000);
  EXPECT_NEAR(sigma_n_sq(hom, m, 50.0, 0.5), 0.125, 1e-15);
  EXPECT_NEAR(limit_coeffs(homogeneous_limit(), 50.0, 0.5).sigma_sq, 0.125, 1e-15);
  // fundamentalist term: lambda (F - x)^2 / n per share of fundamentalists
  auto fund_term = [&](std::size_t n) {
    const Population p({{AgentParams::fundamentalist_trader(1, 1), n / 5}, {noise(1, 1, 0.5, 1, 1.0), n - n / 5}});
    return sigma_n_sq(p, m, 40.0, 0.0);
  };
  EXPECT_NEAR(fund_term(100), 0.2 * 100.0 / 100.0, 1e-12);
  EXPECT_NEAR(fund_term(100) / fund_term(10000), 100.0, 1e-9);
}

TEST(LimitCoeffs, Values) {
  auto l = homogeneous_limit();
  l.lambda_f = 0.2;
  const auto c = limit_coeffs(l, 40.0, 0.5);
  EXPECT_DOUBLE_EQ(c.b, 0.5 * 0.1);
  EXPECT_DOUBLE_EQ(c.c_sq, 0.0625);
  EXPECT_DOUBLE_EQ(c.z, 2.0);
  EXPECT_DOUBLE_EQ(c.sigma_sq, 0.125);
}

TEST(Report, HomogeneousFamily) {
  const auto l = homogeneous_limit();
  MarketParams m = market_for_limit(l, 10);
  const auto rep = convergence_report([](std::size_t n) { return Population::homogeneous(noise(1, 1, 0.6, 1, 1.0), n); },
                                      m, l, ProbeGrid::defaults(50.0), {10, 100, 1000});
  ASSERT_EQ(rep.sup_gaps.size(), 3u);
  const double expected[] = {0.025, 0.0025, 0.00025};
  int seen = 0;
  for (const auto& row : rep.rows) {
    if (row.coefficient == Coefficient::kCSq && row.v2 == 0.5) {
      EXPECT_NEAR(row.gap(), expected[seen], 1e-12);
      ++seen;
    }
  }
  EXPECT_EQ(seen, 3);
  EXPECT_TRUE(rep.converging());
  EXPECT_LE(rep.sup_gaps.back().b, 1e-12);
  EXPECT_EQ(rep.sup_gaps.back().z, 0.0);
  for (const auto& row : rep.rows) EXPECT_GE(row.gap(), 0.0);
}

TEST(Report, LimitFamilyWithFundamentalists) {
  LimitParams l = homogeneous_limit();
  l.beta = 1.0;
  l.phi = 0.2;
  l.lambda_f = 0.2;
  l.lambda_n = 0.8;
  const auto rep = convergence_report([&](std::size_t n) { return population_for_limit(l, n); },
                                      market_for_limit(l, 10), l, ProbeGrid::defaults(50.0), {10, 100, 1000});
  // exact-proportion fundamentalists: z matches for every n
  for (const auto& g : rep.sup_gaps) EXPECT_LE(g.z, 1e-12);
  // sigma^2 differs only by the fundamentalist term lambda_F (F - x)^2 / n
  for (const auto& g : rep.sup_gaps) EXPECT_NEAR(g.sigma_sq, 0.2 * 400.0 / static_cast<double>(g.n), 1e-9);
  EXPECT_TRUE(rep.converging(Coefficient::kZ));
  EXPECT_TRUE(rep.converging(Coefficient::kSigmaSq));
  // mean-field b treats the pinned share phi as if it sat at v: gap beta phi v
  for (const auto& g : rep.sup_gaps) EXPECT_NEAR(g.b, 0.2, 1e-12);
  EXPECT_FALSE(rep.converging(Coefficient::kB));
}

TEST(Report, FlagsDivergingFamily) {
  // gamma_a^2 = a: the mean transition intensity grows with n
  const auto l = homogeneous_limit();
  auto family = [](std::size_t n) {
    std::vector<AgentParams> agents;
    for (std::size_t a = 1; a <= n; ++a) agents.push_back(noise(static_cast<double>(a), 1, 0.6, 1, 1.0));
    return Population::from_agents(agents);
  };
  const auto rep = convergence_report(family, market_for_limit(l, 10), l, ProbeGrid::defaults(50.0), {10, 100, 1000});
  EXPECT_FALSE(rep.converging(Coefficient::kCSq));
  EXPECT_FALSE(rep.converging());
}

TEST(Report, WrongSizedFamilyRejected) {
  const auto l = homogeneous_limit();
  EXPECT_THROW(convergence_report([](std::size_t) { return Population::homogeneous(noise(1, 1, 0.6, 1), 3); },
                                  market_for_limit(l, 10), l, ProbeGrid::defaults(50.0), {10}),
               ValidationError);
}

TEST(ProbeGrid, Defaults) {
  const auto g = ProbeGrid::defaults(50.0);
  ASSERT_EQ(g.v2.size(), 11u);
  EXPECT_DOUBLE_EQ(g.v2[3], 0.3);
  ASSERT_EQ(g.x.size(), 9u);
  EXPECT_EQ(g.x.front(), 30.0);
  EXPECT_EQ(g.x.back(), 70.0);
}
