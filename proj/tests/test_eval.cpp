#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace rmpc;
using rmpc::test::small_shape;

namespace {

std::vector<MpcInstance> instances(int count, int n, int horizon, std::uint64_t seed, double box = 0.5) {
  Rng rng(seed);
  std::vector<MpcInstance> out;
  for (int i = 0; i < count; ++i) {
    MpcInstance inst{Vec(n), RefTraj(1, horizon), horizon};
    for (int k = 0; k < n; ++k) inst.x0[k] = rng.uniform(-box, box);
    for (int j = 0; j < horizon; ++j) inst.r(0, j) = rng.uniform(-box, box);
    out.push_back(inst);
  }
  return out;
}

// Oracle first controls copied from the policy itself.
OracleFirstControls policy_as_oracle(const RecurrentPolicy& p, const std::vector<MpcInstance>& set,
                                     const std::vector<int>& horizons) {
  OracleFirstControls u(set.size());
  for (std::size_t i = 0; i < set.size(); ++i)
    for (int h : horizons) u[i].push_back(p.evaluate(set[i].x0, set[i].r, h));
  return u;
}

}  // namespace

TEST(Summary, MeanAndInterval) {
  const auto s = summarize({1, 2, 3, 4});
  EXPECT_DOUBLE_EQ(s.mean, 2.5);
  EXPECT_NEAR(s.ci95, 1.96 * std::sqrt(5.0 / 3.0) / 2.0, 1e-15);
  EXPECT_EQ(summarize({7}).ci95, 0.0);
  EXPECT_EQ(summarize({}).count, 0);
}

TEST(PolicyError, ZeroWhenPolicyMatchesOracle) {
  RecurrentPolicy p(small_shape(CellKind::gated, 2, 6, 0.5));
  p.init_params(3);
  const auto set = instances(20, 2, 5, 1);
  const std::vector<int> hs{1, 2, 3, 4, 5};
  const auto table = policy_error_from(p, set, hs, policy_as_oracle(p, set, hs));
  ASSERT_EQ(table.rows.size(), 5u);
  for (const auto& row : table.rows) {
    EXPECT_EQ(row.error.mean, 0.0);
    EXPECT_EQ(row.error.count, 20);
  }
}

// Constant offset d with oracle range R gives e_N = d / R for every N.
TEST(PolicyError, OffsetOverGlobalRange) {
  RecurrentPolicy p(small_shape(CellKind::plain, 2, 4, 0.5));
  p.init_params(8);
  const auto set = instances(10, 2, 3, 2);
  const std::vector<int> hs{1, 3};
  auto u = policy_as_oracle(p, set, hs);
  for (auto& per : u)
    for (auto& v : per) v[0] += 0.01;
  double lo = 1e9, hi = -1e9;
  for (auto& per : u)
    for (auto& v : per) lo = std::min(lo, v[0]), hi = std::max(hi, v[0]);
  const auto table = policy_error_from(p, set, hs, u);
  EXPECT_DOUBLE_EQ(table.u_star_min, lo);
  EXPECT_DOUBLE_EQ(table.u_star_max, hi);
  for (const auto& row : table.rows) EXPECT_NEAR(row.error.mean, 0.01 / (hi - lo), 1e-12);
}

TEST(PolicyError, NonOptimalSolvesAreExcluded) {
  RecurrentPolicy p(small_shape(CellKind::plain, 2, 4, 0.5));
  p.init_params(8);
  const auto set = instances(4, 2, 2, 3);
  const std::vector<int> hs{1, 2};
  auto u = policy_as_oracle(p, set, hs);
  u[1][0][0] = std::numeric_limits<double>::quiet_NaN();
  const auto table = policy_error_from(p, set, hs, u);
  EXPECT_EQ(table.rows[0].excluded, 1);
  EXPECT_EQ(table.rows[0].error.count, 3);
  EXPECT_EQ(table.rows[1].excluded, 0);
}

TEST(PolicyError, DegenerateNormalizationRefused) {
  RecurrentPolicy p(small_shape(CellKind::plain, 2, 4));
  const auto set = instances(5, 2, 2, 4);
  OracleFirstControls u(5, std::vector<Vec>(2, Vec::Constant(1, 0.3)));
  EXPECT_THROW(policy_error_from(p, set, {1, 2}, u), EvalRefused);
}

TEST(PolicyError, AgainstRiccatiOracle) {
  auto model = make_double_integrator();
  auto util = make_tracking_utility(1.0, (Vec(2) << 0, 0.05).finished(), Vec::Constant(1, 0.01));
  OracleFn oracle = [&](const Vec& x, const RefTraj& r, int h) { return solve_riccati(*model, *util, x, r, h); };
  RecurrentPolicy p(small_shape(CellKind::plain, 2, 4));
  const auto set = instances(10, 2, 4, 5, 0.05);
  const auto table = policy_error(p, oracle, set, {1, 2, 3, 4});
  // zero policy: e_N = mean |u*| / range, strictly positive
  for (const auto& row : table.rows) EXPECT_GT(row.error.mean, 0.0);
}

TEST(CostToGo, ZeroControllerAtRestCostsNothing) {
  auto model = make_double_integrator();
  auto util = make_tracking_utility(1.0, (Vec(2) << 0, 0.05).finished(), Vec::Constant(1, 0.01));
  Controller zero = [](const Vec&, const RefTraj&) { return Vec(Vec::Zero(1)); };
  const auto res = cost_to_go(*model, *util, zero, Vec::Zero(2), RefTraj::Zero(1, 30), 20, 10);
  EXPECT_EQ(res.cost, 0.0);
  EXPECT_FALSE(res.diverged);
  EXPECT_EQ(res.states.cols(), 21);
}

TEST(CostToGo, NonNegativeAndShortStreamRejected) {
  auto model = std::make_shared<BicycleModel>();
  auto util = make_bicycle_utility();
  RecurrentPolicy p(small_shape(CellKind::gated, 4, 8, 0.2));
  p.init_params(1);
  const RefTraj r = sine_reference(2.0, 120.0, 0.8, 0.0, 60);
  const auto res = cost_to_go(*model, *util, policy_controller(p, 5), Vec::Zero(4), r, 50, 5);
  EXPECT_GE(res.cost, 0.0);
  EXPECT_EQ(res.controls.cols(), 50);
  EXPECT_THROW(cost_to_go(*model, *util, policy_controller(p, 5), Vec::Zero(4), r, 58, 5), ContractViolation);
}

TEST(CostToGo, DivergenceIsInfiniteWithStep) {
  auto model = std::make_shared<BicycleModel>();
  auto util = make_bicycle_utility();
  Controller zero = [](const Vec&, const RefTraj&) { return Vec(Vec::Zero(1)); };
  const Vec x0 = (Vec(4) << 19.0, 0.0, 5.0, 0.0).finished();  // drifts 0.25 m per step
  const auto res = cost_to_go(*model, *util, zero, x0, RefTraj::Zero(1, 20), 10, 1);
  EXPECT_TRUE(res.diverged);
  EXPECT_TRUE(std::isinf(res.cost));
  EXPECT_GT(res.diverged_step, 1);
  EXPECT_EQ(res.states.cols(), res.diverged_step);
}

TEST(Anytime, ExtremeBudgetsPinDepth) {
  auto model = std::make_shared<BicycleModel>();
  auto util = make_bicycle_utility();
  RecurrentPolicy p(small_shape(CellKind::gated, 4, 8, 0.2));
  p.init_params(1);
  std::vector<ClosedLoopStart> starts{{Vec::Zero(4), sine_reference(1.0, 120.0, 0.8, 0.3, 40)}};
  const auto rows = anytime_experiment(p, *model, *util, {0.0, 1e9}, {1.0}, starts, 20, 6);
  EXPECT_EQ(rows[0].depth_min, 1);
  EXPECT_EQ(rows[0].depth_max, 1);
  EXPECT_EQ(rows[1].depth_min, 6);
  EXPECT_EQ(rows[1].depth_max, 6);
  const auto c1 = cost_to_go(*model, *util, policy_controller(p, 1), starts[0].x0, starts[0].r_stream, 20, 6);
  EXPECT_EQ(rows[0].cost.mean, c1.cost);
  EXPECT_THROW(anytime_experiment(p, *model, *util, {2.0, 1.0}, {1.0}, starts, 20, 6), ContractViolation);
}

TEST(Sweep, NominalRowEqualsBaselineRun) {
  auto util = make_bicycle_utility();
  RecurrentPolicy p(small_shape(CellKind::gated, 4, 8, 0.2));
  p.init_params(2);
  ModelFactory factory = [](const std::map<std::string, double>& o) { return make_model("bicycle", o); };
  ScenarioFn scenario = [](const SystemModel&) {
    return ClosedLoopStart{Vec::Zero(4), sine_reference(1.0, 120.0, 0.8, 0.0, 40)};
  };
  const std::map<std::string, double> nominal{{"mass", 1500.0}, {"mu", 1.0}};
  const auto rows = robustness_sweep(p, 3, factory, *util, nominal,
                                     {{"mu", {0.8, 1.0}}, {"mass", {1400.0, 1500.0}}}, scenario, 30, 3);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0].parameter, "mass");
  EXPECT_EQ(rows[3].parameter, "mu");
  const auto base = cost_to_go(*factory(nominal), *util, policy_controller(p, 3), Vec::Zero(4),
                               sine_reference(1.0, 120.0, 0.8, 0.0, 40), 30, 3);
  for (const auto& row : rows) {
    if (!row.nominal) continue;
    EXPECT_EQ(row.cost, base.cost);
    EXPECT_EQ(row.tracking_error, base.mean_abs_tracking_error);
  }
  EXPECT_TRUE(rows[1].nominal);
  EXPECT_FALSE(rows[0].nominal);
}

TEST(Timing, LineFit) {
  const auto f = fit_line({1, 2, 3, 4}, {3, 5, 7, 9});
  EXPECT_NEAR(f.slope, 2.0, 1e-12);
  EXPECT_NEAR(f.intercept, 1.0, 1e-12);
  EXPECT_NEAR(f.r2, 1.0, 1e-12);
  EXPECT_LT(fit_line({1, 2, 3, 4}, {1, 3, 1, 3}).r2, 0.5);
}

TEST(Timing, MoreCyclesCostMoreTime) {
  RecurrentPolicy p(small_shape(CellKind::gated, 4, 32, 0.2));
  p.init_params(1);
  const RefTraj r = RefTraj::Constant(1, 15, 0.5);
  const auto prof = timing_profile(p, nullptr, {1, 15}, Vec::Zero(4), r, 7);
  ASSERT_EQ(prof.rows.size(), 2u);
  EXPECT_LT(prof.rows[0].policy_ms, prof.rows[1].policy_ms);
  EXPECT_TRUE(std::isnan(prof.rows[0].oracle_ms));
}
