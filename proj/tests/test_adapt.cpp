#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include "npmle/adapt.hpp"
#include "npmle/data.hpp"
#include "npmle/error.hpp"
#include "npmle/harness.hpp"
#include "npmle/metrics.hpp"

using namespace npmle;

namespace {

// Choices generated from utilities x * beta + e with e ~ N(0, I) and a fixed
// slope; no library probability code involved.
Dataset single_slope_data(double beta, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 eng(seed);
  std::normal_distribution<double> z;
  std::vector<double> x(n * 3);
  std::vector<std::size_t> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    double best = -1e300;
    for (std::size_t j = 0; j < 3; ++j) {
      x[i * 3 + j] = 3.0 * z(eng);
      const double u = x[i * 3 + j] * beta + z(eng);
      if (u > best) {
        best = u;
        y[i] = j;
      }
    }
  }
  return Dataset(3, std::move(x), std::move(y));
}

MixingDistribution fitted_points(const Dataset& d, std::vector<double> locs) {
  MixingDistribution q;
  q.kernel = slope_mixed_kernel(identity_cov(3));
  for (double b : locs) q.components.push_back(Component::point({b}, 1.0 / locs.size()));
  auto cache = build_cache(d, q);
  optimize_weights(q, cache, WeightSolveConfig{});
  return q;
}

}  // namespace

TEST(Grid, PointsPerAxis) {
  EXPECT_EQ(grid_points_per_axis(1000, 1), 1000u);
  EXPECT_EQ(grid_points_per_axis(1000, 2), 31u);
  EXPECT_EQ(grid_points_per_axis(1000, 3), 10u);
  EXPECT_EQ(grid_points_per_axis(4, 2), 2u);
}

TEST(Grid, InitGridSizes) {
  const auto k1 = slope_mixed_kernel(identity_cov(3));
  const std::vector<double> lo1 = {-4.0}, hi1 = {4.0};
  const auto q1 = init_grid(lo1, hi1, 0.1, 1000, k1);
  ASSERT_EQ(q1.size(), 1000u);
  EXPECT_EQ(q1.components.front().location[0], -4.0);
  EXPECT_EQ(q1.components.back().location[0], 4.0);
  EXPECT_NEAR(q1.components[1].location[0] - q1.components[0].location[0], 8.0 / 999.0, 1e-14);
  EXPECT_NO_THROW(q1.validate());

  KernelSpec k3 = asc_mixed_kernel(identity_cov(3));
  k3.slope = Coefficient::mixed_at(2);
  const std::vector<double> lo3(3, -1.0), hi3(3, 1.0);
  EXPECT_EQ(init_grid(lo3, hi3, 0.1, 1000, k3).size(), 1000u);

  const auto k2 = asc_mixed_kernel(identity_cov(3));
  const std::vector<double> lo2 = {0.0, 0.0}, hi2 = {1.0, 1.0};
  const auto q2 = init_grid(lo2, hi2, 0.2, 4, k2);
  ASSERT_EQ(q2.size(), 4u);
  EXPECT_EQ(q2.components[3].location, (std::vector<double>{1.0, 1.0}));
  EXPECT_EQ(q2.components[0].cov_diag, (std::vector<double>{0.2, 0.2}));
  EXPECT_EQ(q2.components[2].weight, 0.25);

  EXPECT_THROW(init_grid(lo2, hi2, 0.2, 3, k2), Error);       // x = 1
  EXPECT_THROW(init_grid(lo1, hi1, 0.2, 200000, k1), Error);  // beyond the cap
  EXPECT_THROW(init_grid(hi1, lo1, 0.2, 10, k1), Error);
}

TEST(Split, OneDimensionalChildren) {
  AdaptConfig cfg;
  Component c;
  c.location = {0.0};
  c.cov_diag = {1.0};
  c.weight = 1.0;
  const auto ch = split_component(c, cfg);
  ASSERT_EQ(ch.size(), 3u);
  const double loc[3] = {-1.18, 0.0, 1.18}, w[3] = {0.24, 0.52, 0.24};
  for (int k = 0; k < 3; ++k) {
    EXPECT_NEAR(ch[k].location[0], loc[k], 1e-15);
    EXPECT_NEAR(ch[k].cov_diag[0], cfg.split_var_factor, 1e-15);
    EXPECT_NEAR(ch[k].weight, w[k], 1e-15);
  }
}

TEST(Split, AffineEquivariance) {
  AdaptConfig cfg;
  Component c;
  c.location = {2.0};
  c.cov_diag = {0.09};
  c.weight = 0.4;
  const auto ch = split_component(c, cfg);
  EXPECT_NEAR(ch[0].location[0], 2.0 - 1.18 * 0.3, 1e-15);
  EXPECT_NEAR(ch[2].location[0], 2.0 + 1.18 * 0.3, 1e-15);
  EXPECT_NEAR(ch[1].cov_diag[0], 0.09 * cfg.split_var_factor, 1e-15);
  EXPECT_NEAR(ch[0].weight + ch[1].weight + ch[2].weight, 0.4, 1e-12);
}

TEST(Split, MomentsPreserved) {
  for (double factor : {0.25, 0.5}) {
    AdaptConfig cfg;
    cfg.split_var_factor = factor;
    Component c;
    c.location = {0.7, -0.2};
    c.cov_diag = {0.8, 0.3};
    c.weight = 0.6;
    const auto ch = split_component(c, cfg);
    ASSERT_EQ(ch.size(), 9u);
    double w = 0.0, m0 = 0.0, v0 = 0.0;
    for (const auto& x : ch) {
      w += x.weight;
      m0 += x.weight * x.location[0];
    }
    EXPECT_NEAR(w, 0.6, 1e-12);
    EXPECT_NEAR(m0 / w, 0.7, 1e-12);
    for (const auto& x : ch) {
      const double d = x.location[0] - 0.7;
      v0 += x.weight * (x.cov_diag[0] + d * d);
    }
    const double expected_factor = factor + 0.24 * 2.0 * 1.18 * 1.18;
    EXPECT_NEAR(v0 / w, 0.8 * expected_factor, 1e-12);
    // Weights form the outer product of the one-dimensional split weights.
    EXPECT_NEAR(ch[1].weight, 0.6 * 0.24 * 0.52, 1e-15);
    EXPECT_NEAR(ch[4].weight, 0.6 * 0.52 * 0.52, 1e-15);
  }
  EXPECT_NEAR(0.5 + 0.24 * 2.0 * 1.18 * 1.18, 1.168352, 1e-12);
}

TEST(Split, RejectsPointMass) {
  EXPECT_THROW(split_component(Component::point({1.0}), AdaptConfig{}), Error);
}

TEST(Split, ApproximatesParentDistribution) {
  AdaptConfig cfg;
  Component c;
  c.location = {0.0};
  c.cov_diag = {1.0};
  c.weight = 1.0;
  MixingDistribution parent, kids;
  parent.kernel = kids.kernel = slope_mixed_kernel(identity_cov(3));
  parent.components = {c};
  kids.components = split_component(c, cfg);
  double max_cdf = 0.0;
  for (int k = -800; k <= 800; ++k) {
    const double z[1] = {k * 0.005};
    max_cdf = std::max(max_cdf, std::abs(mixture_cdf(parent, z) - mixture_cdf(kids, z)));
  }
  EXPECT_NEAR(max_cdf, 0.01, 0.002);
}

TEST(AdaptConfig, Validation) {
  AdaptConfig cfg;
  EXPECT_NO_THROW(cfg.validate(1));
  EXPECT_THROW(cfg.validate(2), Error);
  cfg.set_box(2, -3.0, 3.0);
  EXPECT_NO_THROW(cfg.validate(2));
  cfg.split_weights = {0.3, 0.5, 0.3};
  EXPECT_THROW(cfg.validate(2), Error);
  AdaptConfig c2;
  c2.grid_iters = 0;
  EXPECT_THROW(c2.validate(1), Error);
}

TEST(RefineGrid, AscentAndConcentration) {
  // Truth on a point of the initial grid. A moderate slope keeps choices far
  // from deterministic, where the likelihood barely separates nearby slopes.
  AdaptConfig cfg;
  cfg.grid_target = 100;
  cfg.grid_iters = 6;
  const double truth = -4.0 + 56.0 * 8.0 / 99.0;
  const auto d = single_slope_data(truth, 1000, 41);
  const auto k = slope_mixed_kernel(identity_cov(3));
  const auto q0 = init_grid(cfg.lower, cfg.upper, cfg.grid_var, cfg.grid_target, k);
  const auto r = refine_grid(d, q0, cfg, WeightSolveConfig{});
  ASSERT_EQ(r.trace.size(), 7u);
  for (std::size_t t = 1; t < r.trace.size(); ++t) EXPECT_GE(r.trace[t].ll, r.trace[t - 1].ll);
  double near = 0.0;
  const double radius = 1.18 * std::sqrt(cfg.grid_var);
  for (const auto& c : r.q.components)
    if (std::abs(c.location[0] - truth) <= radius) near += c.weight;
  EXPECT_GE(near, 0.95);
  EXPECT_NO_THROW(r.q.validate());
}

TEST(RefineGrid, NoChildrenLeavesComponentsUnchanged) {
  const auto d = single_slope_data(0.5, 200, 42);
  AdaptConfig cfg;
  cfg.grid_target = 20;
  cfg.grid_iters = 2;
  cfg.m_l = 0;
  const auto q0 = init_grid(cfg.lower, cfg.upper, cfg.grid_var, cfg.grid_target,
                            slope_mixed_kernel(identity_cov(3)));
  const auto r = refine_grid(d, q0, cfg, WeightSolveConfig{});
  EXPECT_EQ(r.trace[1].n_components, r.trace[0].n_components);
  EXPECT_EQ(r.trace[2].ll, r.trace[0].ll);
}

TEST(MhSample, ConcentratesOnPositiveBump) {
  Criterion bump = [](std::span<const double> b) {
    const double t = b[0] - 1.0;
    return std::abs(t) < 1.0 ? 0.05 * (1.0 - t * t) : -0.5;
  };
  std::vector<std::vector<double>> probes;
  for (int k = 0; k < 100; ++k) probes.push_back({-4.0 + 8.0 * k / 99.0});
  const std::vector<double> lo = {-4.0}, hi = {4.0};
  const auto s = mh_sample(bump, probes, lo, hi, 500, 0.4, 5, 1e-6, 1e-6, 7);
  ASSERT_EQ(s.size(), 500u);
  std::size_t inside = 0;
  for (const auto& v : s) {
    EXPECT_GE(v[0], -4.0);
    EXPECT_LE(v[0], 4.0);
    inside += std::abs(v[0] - 1.0) < 1.0;
  }
  EXPECT_GE(static_cast<double>(inside) / 500.0, 0.9);
  EXPECT_EQ(s, mh_sample(bump, probes, lo, hi, 500, 0.4, 5, 1e-6, 1e-6, 7));
  EXPECT_NE(s, mh_sample(bump, probes, lo, hi, 500, 0.4, 5, 1e-6, 1e-6, 8));
}

TEST(MhSample, EmptyWhenNothingPositive) {
  Criterion flat = [](std::span<const double>) { return -1e-3; };
  const std::vector<std::vector<double>> probes = {{0.0}, {1.0}};
  const std::vector<double> lo = {-4.0}, hi = {4.0};
  EXPECT_TRUE(mh_sample(flat, probes, lo, hi, 10, 0.1, 5, 1e-6, 1e-6, 1).empty());
}

TEST(MhSampleSupport, NearlyEmptyAtOptimum) {
  const auto sim = simulate_case(CaseId::C1a, 300, 43);
  std::vector<double> locs;
  for (int k = 0; k <= 160; ++k) locs.push_back(-4.0 + 0.05 * k);
  const auto q = fitted_points(sim.data, locs);
  const auto cache = build_cache(sim.data, q);
  AdaptConfig cfg;
  cfg.mh_min_gradient = 1e-4;
  const std::vector<double> cov = {0.0};
  EXPECT_TRUE(mh_sample_support(sim.data, q, cache, cov, cfg, 3).empty());
}

TEST(GroupAndAdd, DuplicateCandidateChangesNothing) {
  const auto sim = simulate_case(CaseId::C1a, 200, 44);
  auto q = fitted_points(sim.data, {-1.0, 1.0});
  auto cache = build_cache(sim.data, q);
  const auto before = q;
  const std::vector<Component> cands = {Component::point({1.0})};
  EXPECT_TRUE(group_and_add(sim.data, q, cache, cands, 0, 1).empty());
  EXPECT_EQ(q, before);
}

TEST(GroupAndAdd, SingleImprovingCandidate) {
  const auto sim = simulate_case(CaseId::C1a, 300, 45);
  MixingDistribution q;
  q.kernel = slope_mixed_kernel(identity_cov(3));
  q.components = {Component::point({1.0}, 1.0)};
  auto cache = build_cache(sim.data, q);
  const double ll0 = scaled_loglik(cache);
  const std::vector<Component> cands = {Component::point({-1.0})};
  const auto added = group_and_add(sim.data, q, cache, cands, 1, 2);
  ASSERT_EQ(added.size(), 1u);
  EXPECT_GT(added[0].gradient, 0.0);
  EXPECT_EQ(q.size(), 2u);
  EXPECT_GT(scaled_loglik(cache), ll0);
  EXPECT_NEAR(q.components[1].weight, added[0].alpha, 1e-15);
  EXPECT_NO_THROW(q.validate());
}

TEST(GroupAndAdd, AtMostOneAdditionPerGroup) {
  const auto sim = simulate_case(CaseId::C1b, 300, 46);
  auto q = fitted_points(sim.data, {-2.0, 0.0, 2.0});
  auto cache = build_cache(sim.data, q);
  std::vector<Component> cands;
  for (int k = 0; k < 10; ++k) cands.push_back(Component::point({-3.5 + 0.77 * k}));
  const double ll0 = scaled_loglik(cache);
  const auto added = group_and_add(sim.data, q, cache, cands, 3, 5);
  EXPECT_LE(added.size(), 3u);
  std::vector<int> seen(3, 0);
  for (const auto& a : added) {
    EXPECT_GT(a.gradient, 0.0);
    EXPECT_GT(a.alpha, 0.0);
    ASSERT_LT(a.group, 3u);
    EXPECT_EQ(++seen[a.group], 1);
  }
  EXPECT_EQ(q.size(), 3u + added.size());
  EXPECT_GE(scaled_loglik(cache), ll0);
}

TEST(Estimate, DeterministicAndAscending) {
  const auto sim = simulate_case(CaseId::C1a, 250, 47);
  auto s = default_settings(CaseId::C1a);
  s.adapt.outer_rounds = 3;
  s.adapt.grid_target = 200;
  const Estimator which[] = {Estimator::EM};
  const auto a = fit_estimators(sim.data, CaseId::C1a, which, s, 9);
  const auto b = fit_estimators(sim.data, CaseId::C1a, which, s, 9);
  EXPECT_EQ(a[0].result.q, b[0].result.q);
  const auto& tr = a[0].result.trace;
  ASSERT_GE(tr.size(), 2u);
  EXPECT_EQ(tr[0].step, "init");
  for (std::size_t t = 1; t < tr.size(); ++t) {
    if (tr[t].step == "prune") continue;
    EXPECT_GE(tr[t].ll, tr[t - 1].ll - 1e-12) << t << ' ' << tr[t].step;
  }
  EXPECT_LE(a[0].result.q.size(), static_cast<std::size_t>(1.0 / s.adapt.eps_tol));
  EXPECT_EQ(a[0].result.loglik, tr.back().ll);
}

TEST(Estimate, ModeStrings) {
  EXPECT_EQ(mode_from_string("EM-GR"), Mode::EM_GR);
  EXPECT_EQ(to_string(Mode::GR), "GR");
  EXPECT_THROW(mode_from_string("XX"), Error);
}

TEST(Estimate, EmBeatsGeneratingMixtureOnCase1b) {
  const auto sim = simulate_case(CaseId::C1b, 2500, 48);
  const Estimator which[] = {Estimator::EM};
  const auto fit = fit_estimators(sim.data, CaseId::C1b, which, default_settings(CaseId::C1b), 1);
  EXPECT_GE(ll_gap(sim.data, fit[0].result.q), 0.0);
}

TEST(Estimate, TraceCsv) {
  Trace t = {{0, "init", -0.5, 3, 0.01}, {1, "em", -0.25, 3, 0.001}};
  const auto p = std::filesystem::temp_directory_path() / "npmle_trace_test.csv";
  write_trace_csv(t, p);
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "round,step,ll,n_components,max_D");
  std::getline(in, line);
  EXPECT_EQ(line, "0,init,-0.5,3,0.01");
}
