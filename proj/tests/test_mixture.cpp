#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "npmle/data.hpp"
#include "npmle/error.hpp"
#include "npmle/mixture.hpp"
#include "oracles.hpp"

using namespace npmle;

namespace {

MixingDistribution two_points(const KernelSpec& k) {
  MixingDistribution q;
  q.kernel = k;
  q.components = {Component::point({-1.0}, 0.3), Component::point({1.5}, 0.7)};
  return q;
}

}  // namespace

TEST(Mixing, ValidateAndNormalize) {
  auto q = two_points(slope_mixed_kernel(identity_cov(3)));
  EXPECT_NO_THROW(q.validate());
  q.components[0].weight = 0.5;
  EXPECT_THROW(q.validate(), Error);
  q.normalize();
  EXPECT_NO_THROW(q.validate());
  EXPECT_NEAR(q.components[0].weight, 0.5 / 1.2, 1e-15);
  q.components[1].cov_diag = {-0.1};
  EXPECT_THROW(q.validate(), Error);
  q.components[1].cov_diag = {0.0, 0.0};
  EXPECT_THROW(q.validate(), Error);
}

TEST(Mixing, ComponentCap) {
  auto q = two_points(slope_mixed_kernel(identity_cov(3)));
  EXPECT_TRUE(check_component_cap(q, 1));
  q.components.assign(5, Component::point({0.0}, 0.2));
  EXPECT_FALSE(check_component_cap(q, 2));  // 5 > n + 1 = 3
  EXPECT_THROW(check_component_cap(q, 1), Error);  // 5 > 2 (n + 1) = 4
}

TEST(ProbCache, MatchesDirectEvaluation) {
  const auto sim = simulate_case(CaseId::C1a, 40, 2);
  const auto q = two_points(slope_mixed_kernel(identity_cov(3)));
  const auto cache = build_cache(sim.data, q);
  ASSERT_EQ(cache.rows(), 40u);
  ASSERT_EQ(cache.cols(), 2u);
  for (std::size_t i = 0; i < 40; ++i) {
    double m = 0.0;
    for (std::size_t s = 0; s < 2; ++s) {
      const double p = component_prob(sim.data, i, q.kernel, q.components[s]);
      EXPECT_EQ(cache.column(s)[i], p);
      m += q.components[s].weight * p;
    }
    EXPECT_NEAR(cache.mixed()[i], m, 1e-16);
  }
  EXPECT_NEAR(scaled_loglik(cache),
              oracle::loglik(cache.data(), 40, std::vector<double>{0.3, 0.7}), 1e-15);
}

TEST(ProbCache, AppendKeepRefresh) {
  const auto sim = simulate_case(CaseId::C1b, 30, 3);
  auto q = two_points(slope_mixed_kernel(identity_cov(3)));
  auto cache = build_cache(sim.data, q);
  const auto extra = candidate_probs(sim.data, q.kernel, Component::point({0.2}));
  cache.append_column(extra);
  ASSERT_EQ(cache.cols(), 3u);
  const std::size_t keep[] = {0, 2};
  cache.keep_columns(keep);
  ASSERT_EQ(cache.cols(), 2u);
  for (std::size_t i = 0; i < 30; ++i) EXPECT_EQ(cache.column(1)[i], extra[i]);
  const double w[] = {0.5, 0.5};
  cache.refresh_mixed(w);
  for (std::size_t i = 0; i < 30; ++i)
    EXPECT_NEAR(cache.mixed()[i], 0.5 * cache.column(0)[i] + 0.5 * extra[i], 1e-16);
  EXPECT_THROW(cache.refresh_mixed(std::vector<double>{1.0}), Error);
}

TEST(ProbCache, RefreshColumnAfterMove) {
  const auto sim = simulate_case(CaseId::C1b, 25, 4);
  auto q = two_points(slope_mixed_kernel(identity_cov(3)));
  auto cache = build_cache(sim.data, q);
  q.components[1].location = {0.4};
  refresh_column(cache, sim.data, q, 1);
  cache.refresh_mixed(q.weights());
  const auto fresh = build_cache(sim.data, q);
  for (std::size_t k = 0; k < cache.data().size(); ++k) EXPECT_EQ(cache.data()[k], fresh.data()[k]);
  for (std::size_t i = 0; i < 25; ++i) EXPECT_EQ(cache.mixed()[i], fresh.mixed()[i]);
}

TEST(Gradient, MatchesFiniteDifferenceOfLoglik) {
  // D(beta; Q) is the derivative of ll((1 - e) Q + e delta_beta) at e = 0.
  const auto sim = simulate_case(CaseId::C1b, 60, 5);
  const auto q = two_points(slope_mixed_kernel(identity_cov(3)));
  const auto cache = build_cache(sim.data, q);
  for (double beta : {-2.0, 0.3, 2.5}) {
    const auto cand = Component::point({beta});
    const auto g = gradient_D(cand, q, cache, sim.data);
    const auto p = candidate_probs(sim.data, q.kernel, cand);
    auto ll_at = [&](double e) {
      double sum = 0.0;
      for (std::size_t i = 0; i < 60; ++i) sum += std::log((1 - e) * cache.mixed()[i] + e * p[i]);
      return sum / 60.0;
    };
    const double h = 1e-6;
    const double fd = (ll_at(h) - ll_at(0.0)) / h;
    EXPECT_NEAR(g.value, fd, 1e-5) << beta;
    EXPECT_NEAR(g.value, gradient_from_probs(cache.mixed(), g.probs), 1e-15);
  }
}

TEST(Gradient, ZeroAtSupportOfSinglePoint) {
  const auto sim = simulate_case(CaseId::C1a, 30, 6);
  MixingDistribution q;
  q.kernel = slope_mixed_kernel(identity_cov(3));
  q.components = {Component::point({0.8}, 1.0)};
  const auto cache = build_cache(sim.data, q);
  EXPECT_NEAR(gradient_D(q.components[0], q, cache, sim.data).value, 0.0, 1e-14);
}

TEST(Gradient, BatchEqualsSingle) {
  const auto sim = simulate_case(CaseId::C2a, 40, 7);
  MixingDistribution q;
  q.kernel = asc_mixed_kernel({1, .5, 0, .5, 1.25, .5, 0, .5, 1.25});
  q.components = {Component::point({0.0, 0.0}, 0.6), Component::point({0.5, -0.5}, 0.4)};
  const auto cache = build_cache(sim.data, q);
  std::vector<Component> cands;
  for (double a : {-1.0, 0.0, 1.0})
    for (double b : {-1.0, 1.0}) {
      Component c;
      c.location = {a, b};
      c.cov_diag = {0.0, 0.2};
      cands.push_back(c);
    }
  const auto batch = gradient_D_batch(cands, q, cache, sim.data);
  for (std::size_t k = 0; k < cands.size(); ++k)
    EXPECT_EQ(batch[k].value, gradient_D(cands[k], q, cache, sim.data).value);
}

TEST(Optimality, ReportsViolationsAndArgmax) {
  const auto sim = simulate_case(CaseId::C1a, 200, 8);
  MixingDistribution q;
  q.kernel = slope_mixed_kernel(identity_cov(3));
  q.components = {Component::point({3.0}, 1.0)};
  const auto probes = tensor_grid(std::vector<double>{-4.0}, std::vector<double>{4.0}, 81);
  const std::vector<double> cov = {0.0};
  const auto r = check_optimality(q, sim.data, probes, cov, 0.01);
  EXPECT_FALSE(r.ok);
  EXPECT_GT(r.max_D, 0.01);
  EXPECT_NEAR(r.max_abs_support_D, 0.0, 1e-14);
  ASSERT_EQ(r.argmax.size(), 1u);
}

TEST(TensorGrid, OrderAndEndpoints) {
  const std::vector<double> lo = {0.0, 0.0}, hi = {1.0, 2.0};
  const auto g = tensor_grid(lo, hi, 2);
  ASSERT_EQ(g.size(), 4u);
  EXPECT_EQ(g[0], (std::vector<double>{0.0, 0.0}));
  EXPECT_EQ(g[1], (std::vector<double>{0.0, 2.0}));
  EXPECT_EQ(g[2], (std::vector<double>{1.0, 0.0}));
  EXPECT_EQ(g[3], (std::vector<double>{1.0, 2.0}));
  const auto one = tensor_grid(std::vector<double>{-4.0}, std::vector<double>{4.0}, 1000);
  EXPECT_EQ(one.front()[0], -4.0);
  EXPECT_EQ(one.back()[0], 4.0);
}
