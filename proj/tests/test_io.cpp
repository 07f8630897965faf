#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>

#include "npmle/error.hpp"
#include "npmle/io.hpp"

using namespace npmle;

namespace {

std::filesystem::path tmp(const char* name) {
  return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST(Json, MixingRoundTripIsExact) {
  MixingDistribution q;
  q.kernel = asc_mixed_kernel(case_error_cov(CaseId::C2a), 1.0);
  Component a = Component::point({0.1, 1.0 / 3.0}, 0.3);
  Component b;
  b.location = {-2.5, 1e-17};
  b.cov_diag = {0.25, 0.0625};
  b.weight = 0.7;
  q.components = {a, b};
  const auto p = tmp("npmle_io_mixing.json");
  save_mixing(q, p);
  EXPECT_EQ(load_mixing(p), q);
  EXPECT_EQ(mixing_from_json(mixing_to_json(q)), q);
}

TEST(Json, KernelRoundTrip) {
  auto k = slope_mixed_kernel(identity_cov(3, 0.1));
  k.family = Family::MNL;
  EXPECT_EQ(kernel_from_json(kernel_to_json(k)), k);
  EXPECT_EQ(kernel_to_json(k)["slope"], Json({{"mixed", 0}}));
}

TEST(Json, InvalidMixingRejected) {
  auto j = mixing_to_json(MixingDistribution{{Component::point({0.0}, 0.5)},
                                             slope_mixed_kernel(identity_cov(3))});
  EXPECT_THROW(mixing_from_json(j), Error);  // weights do not sum to one
  j.erase("kernel");
  EXPECT_THROW(mixing_from_json(j), Error);
  EXPECT_THROW(load_mixing(tmp("npmle_io_missing.json")), Error);
}

TEST(Json, TruthDescriptor) {
  const auto p = tmp("npmle_io_truth.json");
  save_truth(CaseId::C2b, p);
  EXPECT_EQ(load_truth_case(p), CaseId::C2b);
  const auto j = read_json(p);
  EXPECT_EQ(j["labels"].size(), 2u);
}

TEST(Settings, KeysApply) {
  auto s = default_settings(CaseId::C1a);
  apply_setting(s, "n_em", Json(7));
  apply_setting_text(s, "eps_tol", "0.002");
  apply_setting_text(s, "lower", "[-3]");
  apply_setting_text(s, "single_start", "true");
  EXPECT_EQ(s.em.n_em, 7u);
  EXPECT_EQ(s.adapt.eps_tol, 0.002);
  EXPECT_EQ(s.weights.active_tol, 0.002);
  EXPECT_EQ(s.adapt.lower, std::vector<double>{-3.0});
  EXPECT_TRUE(s.single_start);
  EXPECT_THROW(apply_setting(s, "no_such_key", Json(1)), Error);
  EXPECT_THROW(apply_setting_text(s, "n_em", "many"), Error);
  for (const auto& k : setting_keys()) EXPECT_EQ(env_name(k).rfind("NPMLE_", 0), 0u);
}

TEST(Settings, ObjectReturnsUnknownKeys) {
  auto s = default_settings(CaseId::C1a);
  const auto rest = apply_settings(s, Json::parse(R"({"case":"1a","m_l":4,"n":[250]})"));
  EXPECT_EQ(rest, (std::vector<std::string>{"case", "n"}));
  EXPECT_EQ(s.adapt.m_l, 4u);
  EXPECT_THROW(apply_settings(s, Json::array()), Error);
}

TEST(Settings, EnvironmentOverride) {
  auto s = default_settings(CaseId::C1a);
  EXPECT_EQ(env_name("outer_rounds"), "NPMLE_OUTER_ROUNDS");
  setenv("NPMLE_OUTER_ROUNDS", "2", 1);
  apply_env(s);
  unsetenv("NPMLE_OUTER_ROUNDS");
  EXPECT_EQ(s.adapt.outer_rounds, 2u);
}

TEST(Csv, MetricsRow) {
  MetricsReport m;
  m.ll_gap = 0.5;
  m.pct_neg_err = std::nan("");
  EXPECT_EQ(metrics_csv_header().substr(0, 7), "ll_gap,");
  EXPECT_EQ(metrics_csv_row(m), "0.5,0,0,0,0,nan,0");
  EXPECT_EQ(format_double(0.1), "0.10000000000000001");
}
