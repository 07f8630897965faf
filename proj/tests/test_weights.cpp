#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "npmle/data.hpp"
#include "npmle/error.hpp"
#include "npmle/mixture.hpp"
#include "npmle/weights.hpp"
#include "oracles.hpp"

using namespace npmle;

namespace {

std::vector<double> random_probs(std::size_t n, std::size_t S, std::uint64_t seed) {
  std::mt19937_64 eng(seed);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  std::vector<double> p(n * S);
  for (double& v : p) v = u(eng);
  return p;
}

}  // namespace

TEST(OptimizeWeights, MatchesSimplexSearch) {
  WeightSolveConfig cfg;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const std::size_t n = 20;
    const auto p = random_probs(n, 3, seed);
    const std::vector<double> pi0 = {1.0 / 3, 1.0 / 3, 1.0 / 3};
    const auto r = optimize_weights(p, n, pi0, cfg);
    const auto o = oracle::simplex_search3(p, n, 1e-3);
    EXPECT_NEAR(r.loglik, o.refined, 1e-6) << seed;
    EXPECT_GE(r.loglik, o.coarse - 1e-12);
    EXPECT_TRUE(r.converged);
    EXPECT_NEAR(r.loglik, oracle::loglik(p, n, r.weights), 1e-14);
  }
}

TEST(OptimizeWeights, KktCertificate) {
  WeightSolveConfig cfg;
  cfg.kkt_tol = 1e-8;
  const std::size_t n = 200, S = 40;
  const auto p = random_probs(n, S, 99);
  const std::vector<double> pi0(S, 1.0 / S);
  const auto r = optimize_weights(p, n, pi0, cfg);
  ASSERT_TRUE(r.converged);
  double sum = 0.0;
  for (std::size_t s = 0; s < S; ++s) {
    sum += r.weights[s];
    EXPECT_GE(r.weights[s], 0.0);
    EXPECT_LE(r.gradient[s], 1e-8);
    if (r.weights[s] > cfg.active_tol) {
      EXPECT_NEAR(r.gradient[s], 0.0, 1e-8);
    }
  }
  EXPECT_NEAR(sum, 1.0, 1e-12);
}

TEST(OptimizeWeights, HistoryNonDecreasingAndNeverWorse) {
  WeightSolveConfig cfg;
  cfg.record_history = true;
  const std::size_t n = 50, S = 12;
  const auto p = random_probs(n, S, 5);
  std::vector<double> pi0(S, 0.0);
  pi0[3] = 1.0;  // vertex start
  const auto r = optimize_weights(p, n, pi0, cfg);
  ASSERT_FALSE(r.history.empty());
  EXPECT_NEAR(r.history.front(), oracle::loglik(p, n, pi0), 1e-15);
  for (std::size_t k = 1; k < r.history.size(); ++k) EXPECT_GE(r.history[k], r.history[k - 1]);
}

TEST(OptimizeWeights, SingleComponentIsTrivial) {
  const std::size_t n = 5;
  const std::vector<double> p = {0.2, 0.3, 0.4, 0.5, 0.6}, pi0 = {1.0};
  const auto r = optimize_weights(p, n, pi0, WeightSolveConfig{});
  EXPECT_EQ(r.weights[0], 1.0);
  EXPECT_TRUE(r.converged);
}

TEST(OptimizeWeights, RejectsBadInput) {
  const std::vector<double> p = {0.2, 0.0, 0.4, 0.5};
  EXPECT_THROW(optimize_weights(p, 2, std::vector<double>{0.5, 0.5}, WeightSolveConfig{}), Error);
  const std::vector<double> q = {0.2, 0.3, 0.4, 0.5};
  EXPECT_THROW(optimize_weights(q, 2, std::vector<double>{0.7, 0.7}, WeightSolveConfig{}), Error);
  EXPECT_THROW(optimize_weights(q, 2, std::vector<double>{1.0}, WeightSolveConfig{}), Error);
}

TEST(OptimizeWeights, MixtureOverloadUpdatesCache) {
  const auto sim = simulate_case(CaseId::C1a, 300, 9);
  MixingDistribution q;
  q.kernel = slope_mixed_kernel(identity_cov(3));
  for (double b : {-2.0, -1.0, 0.0, 1.0, 2.0}) q.components.push_back(Component::point({b}, 0.2));
  auto cache = build_cache(sim.data, q);
  const auto r = optimize_weights(q, cache, WeightSolveConfig{});
  EXPECT_EQ(q.weights(), r.weights);
  EXPECT_NEAR(scaled_loglik(cache), r.loglik, 1e-15);
  // The generating support {-1, 1} should carry most of the mass.
  EXPECT_GT(q.components[1].weight + q.components[3].weight, 0.9);
}

TEST(LineSearch, MatchesGoldenSection) {
  std::mt19937_64 eng(3);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  for (int t = 0; t < 20; ++t) {
    std::vector<double> m(30), pn(30);
    for (auto& v : m) v = u(eng);
    for (auto& v : pn) v = u(eng);
    auto f = [&](double a) {
      double s = 0.0;
      for (std::size_t i = 0; i < m.size(); ++i) s += std::log((1 - a) * m[i] + a * pn[i]);
      return s / m.size();
    };
    const double a = line_search_alpha(m, pn);
    const double g = oracle::golden_max(f, 0.0, 1.0);
    EXPECT_NEAR(f(a), f(g), 1e-12);
    EXPECT_GE(f(a), f(0.0));
  }
}

TEST(LineSearch, ZeroForDuplicateAndEdgeCases) {
  const std::vector<double> m = {0.2, 0.5, 0.7};
  EXPECT_EQ(line_search_alpha(m, m), 0.0);
  const std::vector<double> worse = {0.1, 0.1, 0.1};
  EXPECT_EQ(line_search_alpha(m, worse), 0.0);
  const std::vector<double> better = {0.9, 0.9, 0.9};
  EXPECT_EQ(line_search_alpha(m, better), 1.0);
}

TEST(Prune, DropsSmallKeepsHeaviest) {
  MixingDistribution q;
  q.kernel = slope_mixed_kernel(identity_cov(3));
  q.components = {Component::point({0.0}, 0.0005), Component::point({1.0}, 0.6),
                  Component::point({2.0}, 0.3995), Component::point({3.0}, 0.0)};
  const auto keep = prune(q, 1e-3);
  EXPECT_EQ(keep, (std::vector<std::size_t>{1, 2}));
  EXPECT_NEAR(q.components[0].weight + q.components[1].weight, 1.0, 1e-15);
  EXPECT_NEAR(q.components[0].weight, 0.6 / 0.9995, 1e-15);

  MixingDistribution tiny;
  tiny.kernel = q.kernel;
  tiny.components = {Component::point({0.0}, 0.0004), Component::point({1.0}, 0.0006)};
  tiny.normalize();
  EXPECT_EQ(prune(tiny, 0.9), (std::vector<std::size_t>{1}));
}
