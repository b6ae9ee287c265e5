#include "crtprune/harness/suite.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace crtprune;
using namespace crtprune::harness;

namespace {

SimConfig small_config(unsigned workers) {
  SimConfig cfg;
  cfg.replicates = 2000;
  cfg.workers = workers;
  cfg.crt_grid = 1024;
  cfg.crt_leaves = 100;
  cfg.crt_trees = 60;
  return cfg;
}

}  // namespace

TEST(Stats, EmpiricalLaplaceOfPointMasses) {
  const auto e = stats::empirical_laplace({0.0, 1.0}, {0.0, 1.0});
  EXPECT_DOUBLE_EQ(e[0].value, 1.0);
  EXPECT_DOUBLE_EQ(e[0].se, 0.0);
  EXPECT_NEAR(e[1].value, 0.5 * (1.0 + std::exp(-1.0)), 1e-15);
}

TEST(Stats, KsSingleSample) {
  // One point at the median of U(0,1): D = 1/2.
  const auto ks = stats::ks_test({0.5}, [](double x) { return x; });
  EXPECT_DOUBLE_EQ(ks.statistic, 0.5);
}

TEST(ParallelMap, IndependentOfWorkerCount) {
  auto f = [](std::size_t i) {
    Rng g = make_stream(3, stream_tag("pm"), i);
    return standard_normal(g);
  };
  const auto a = parallel_map(1000, 1, f), b = parallel_map(1000, 4, f);
  EXPECT_EQ(a, b);
}

TEST(ParallelMap, RethrowsWorkerException) {
  auto f = [](std::size_t i) -> int {
    if (i == 777) throw DomainError("boom");
    return 0;
  };
  EXPECT_THROW(parallel_map(1000, 3, f), DomainError);
}

TEST(RunSuite, RejectsUnknownSuiteAndBadConfig) {
  EXPECT_THROW(run_suite("nope", small_config(1)), ConfigError);
  auto cfg = small_config(0);
  EXPECT_THROW(run_suite("mechanism", cfg), ConfigError);
}

TEST(RunSuite, MechanismChecksPass) {
  auto cfg = small_config(1);
  cfg.mech_path = std::string(CRTPRUNE_SOURCE_DIR) + "/mechanisms/log.cfg";
  const auto r = run_suite("mechanism", cfg);
  ASSERT_EQ(r.size(), 6u);
  for (const auto& x : r) EXPECT_TRUE(x.pass) << x.id << " " << x.statistic;
}

TEST(RunSuite, ReportsAreByteIdenticalAcrossWorkerCounts) {
  for (const char* s : {"csbp", "mass", "gw", "crt"}) {
    const auto a = to_jsonl(run_suite(s, small_config(1)), false);
    const auto b = to_jsonl(run_suite(s, small_config(3)), false);
    EXPECT_EQ(a, b) << s;
  }
}

TEST(Report, RuntimeOnlyWithTiming) {
  ValidationReport r;
  r.id = "x";
  r.runtime = 1.5;
  EXPECT_TRUE(to_json(r, false)["runtime_s"].is_null());
  EXPECT_EQ(to_json(r, true)["runtime_s"], 1.5);
}
