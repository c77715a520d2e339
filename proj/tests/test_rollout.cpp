#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace rmpc;
using rmpc::test::small_shape;

namespace {

std::shared_ptr<QuadraticTrackingUtility> lq_utility() {
  return make_tracking_utility(1.0, (Vec(2) << 0, 0.05).finished(), Vec::Constant(1, 0.01));
}

MpcInstance random_instance(Rng& rng, int n, int horizon, double box = 1.0) {
  MpcInstance inst;
  inst.x0.resize(n);
  for (int i = 0; i < n; ++i) inst.x0[i] = rng.uniform(-box, box);
  inst.r.resize(1, horizon);
  for (int j = 0; j < horizon; ++j) inst.r(0, j) = rng.uniform(-box, box);
  inst.horizon = horizon;
  return inst;
}

}  // namespace

TEST(Rollout, ZeroPolicyAtOriginCostsNothing) {
  auto model = make_double_integrator();
  RecurrentPolicy p(small_shape(CellKind::gated, 2, 4));
  MpcInstance inst{Vec::Zero(2), RefTraj::Zero(1, 5), 5};
  EXPECT_EQ(rollout_cost(*model, *lq_utility(), p, inst).cost, 0.0);
}

// One step by hand: u = pi^1(x0, r_1), V = l(f(x0, u), r_1, u).
TEST(Rollout, SingleStepMatchesHandEvaluation) {
  auto model = make_double_integrator();
  RecurrentPolicy p(small_shape(CellKind::plain, 2, 1, 0.2));
  const auto& L = p.layout();
  Vec& t = p.params();
  t[L.layers[0].w + 0] = 0.5;
  t[L.layers[0].w + 1] = -0.25;
  t[L.layers[0].w + 2] = 0.75;
  t[L.layers[0].u] = 0.6;
  t[L.layers[0].b] = 0.1;
  t[L.wy] = 1.3;
  t[L.by] = -0.2;
  MpcInstance inst{(Vec(2) << 0.4, -0.3).finished(), RefTraj::Constant(1, 1, 0.2), 1};
  const double u = 0.08964870830832748;  // tests/oracles/hand_policy.py, cycle 1
  const double p1 = 0.4 + 0.05 * -0.3;
  const double v1 = -0.3 + 0.05 * u;
  const double expected = (p1 - 0.2) * (p1 - 0.2) + 0.05 * v1 * v1 + 0.01 * u * u;
  EXPECT_NEAR(rollout_cost(*model, *lq_utility(), p, inst).cost, expected, 1e-15);
}

TEST(Rollout, CostIsSumOfStepUtilitiesAndWorkIsTriangular) {
  auto model = std::make_shared<BicycleModel>();
  auto util = make_bicycle_utility();
  RecurrentPolicy p(small_shape(CellKind::gated, 4, 8, 0.2));
  p.init_params(4);
  Rng rng(2);
  const MpcInstance inst = random_instance(rng, 4, 7, 0.3);
  const auto res = rollout_cost(*model, *util, p, inst);
  EXPECT_EQ(res.cost, res.utilities.sum());
  EXPECT_EQ(res.cycles_per_call, (std::vector<int>{7, 6, 5, 4, 3, 2, 1}));
  for (int i = 1; i <= 7; ++i)
    EXPECT_EQ(res.states.col(i), model->step(res.states.col(i - 1), res.controls.col(i - 1)));
  const auto bg = rollout_grad_batch(*model, *util, p, std::span<const MpcInstance>(&inst, 1));
  EXPECT_EQ(bg.cycles, 7 * 8 / 2);
}

// Injected controls reproduce the open-loop cost of that sequence exactly.
TEST(Rollout, InjectedControlsReproduceOpenLoopCost) {
  auto model = make_double_integrator();
  auto util = lq_utility();
  Rng rng(8);
  const MpcInstance inst = random_instance(rng, 2, 6);
  Mat u(1, 6);
  for (int j = 0; j < 6; ++j) u(0, j) = rng.uniform(-1, 1);
  const auto res = rollout_with(*model, *util, inst, [&](int i, const Vec&, const RefTraj&) { return Vec(u.col(i - 1)); });
  EXPECT_EQ(res.cost, open_loop_cost(*model, *util, inst.x0, inst.r, u));
}

TEST(Rollout, ZeroUtilityGivesZeroGradient) {
  auto model = make_double_integrator();
  auto zero = make_tracking_utility(0.0, Vec::Zero(2), Vec::Zero(1));
  RecurrentPolicy p(small_shape(CellKind::gated, 2, 4));
  p.init_params(1);
  Rng rng(3);
  const auto vg = rollout_grad(*model, *zero, p, random_instance(rng, 2, 3));
  EXPECT_EQ(vg.value, 0.0);
  EXPECT_EQ(vg.grad.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Rollout, GradientMatchesFiniteDifferencesDoubleIntegrator) {
  auto model = make_double_integrator();
  auto util = lq_utility();
  Rng rng(12);
  for (auto cell : {CellKind::plain, CellKind::gated}) {
    RecurrentPolicy p(small_shape(cell, 2, 4));
    p.init_params(rng.next());
    const MpcInstance inst = random_instance(rng, 2, 3);
    const auto vg = rollout_grad(*model, *util, p, inst);
    const Vec fd = test::fd_gradient(*model, *util, p, inst, 1e-6);
    EXPECT_LT(test::rel_err(vg.grad, fd), 1e-5);
    EXPECT_EQ(vg.value, rollout_cost(*model, *util, p, inst).cost);
  }
}

TEST(Rollout, ForwardModeRecursionMatchesReverseMode) {
  auto model = std::make_shared<BicycleModel>();
  auto util = make_bicycle_utility();
  Rng rng(6);
  RecurrentPolicy p(small_shape(CellKind::gated, 4, 3, 0.2));
  ASSERT_LE(p.param_count(), 200u);
  p.init_params(3);
  const MpcInstance inst = random_instance(rng, 4, 5, 0.5);
  const auto rev = rollout_grad(*model, *util, p, inst);
  const auto fwd = rollout_grad_forward_mode(*model, *util, p, inst);
  EXPECT_LT(test::rel_err(rev.grad, fwd.grad), 1e-10);
  EXPECT_NEAR(rev.value, fwd.value, 1e-12 * std::max(1.0, rev.value));
}

TEST(Rollout, DivergenceCarriesStepIndex) {
  auto model = std::make_shared<BicycleModel>();
  auto util = make_bicycle_utility();
  RecurrentPolicy p(small_shape(CellKind::plain, 4, 2, 0.2));
  MpcInstance inst{(Vec(4) << 19.5, 0, 20, 0).finished(), RefTraj::Zero(1, 4), 4};
  try {
    rollout_cost(*model, *util, p, inst);
    FAIL() << "expected divergence";
  } catch (const DivergedRollout& e) {
    EXPECT_EQ(e.step(), 1);
  }
}

TEST(Objective, IdenticalInstancesGiveSingleInstanceValue) {
  auto model = make_double_integrator();
  auto util = lq_utility();
  RecurrentPolicy p(small_shape(CellKind::gated, 2, 6));
  p.init_params(9);
  Rng rng(1);
  const MpcInstance inst = random_instance(rng, 2, 4);
  std::vector<MpcInstance> batch(5, inst);
  const auto single = rollout_grad(*model, *util, p, inst);
  const auto obj = objective_batch(*model, *util, p, batch);
  EXPECT_NEAR(obj.value, single.value, 1e-15 * std::max(1.0, single.value));
  EXPECT_LT(test::rel_err(obj.grad, single.grad), 1e-14);
}

TEST(Objective, MeanOfTwoInstances) {
  auto model = make_double_integrator();
  auto util = lq_utility();
  RecurrentPolicy p(small_shape(CellKind::gated, 2, 6));
  p.init_params(9);
  Rng rng(1);
  std::vector<MpcInstance> batch{random_instance(rng, 2, 4), random_instance(rng, 2, 4)};
  const double v1 = rollout_cost(*model, *util, p, batch[0]).cost;
  const double v2 = rollout_cost(*model, *util, p, batch[1]).cost;
  EXPECT_NEAR(objective_batch(*model, *util, p, batch).value, (v1 + v2) / 2, 1e-15);
}

TEST(Objective, BatchGradientMatchesFiniteDifferences) {
  auto model = std::make_shared<ScalarCubicModel>();
  auto util = make_tracking_utility(1.0, Vec::Zero(1), Vec::Constant(1, 0.1));
  RecurrentPolicy p(small_shape(CellKind::gated, 1, 4));
  p.init_params(2);
  Rng rng(5);
  std::vector<MpcInstance> batch;
  for (int i = 0; i < 40; ++i) batch.push_back(random_instance(rng, 1, 3));
  const auto obj = objective_batch(*model, *util, p, batch);
  Vec fd(obj.grad.size());
  for (Eigen::Index k = 0; k < fd.size(); ++k) {
    RecurrentPolicy pp = p, pm = p;
    pp.params()[k] += 1e-6;
    pm.params()[k] -= 1e-6;
    fd[k] = (objective_batch(*model, *util, pp, batch).value - objective_batch(*model, *util, pm, batch).value) / 2e-6;
  }
  EXPECT_LT(test::rel_err(obj.grad, fd), 1e-5);
}

TEST(Objective, WorkerCountDoesNotChangeResult) {
  auto model = std::make_shared<BicycleModel>();
  auto util = make_bicycle_utility();
  RecurrentPolicy p(small_shape(CellKind::gated, 4, 8, 0.2));
  p.init_params(5);
  Rng rng(7);
  std::vector<MpcInstance> batch;
  for (int i = 0; i < 100; ++i) batch.push_back(random_instance(rng, 4, 6, 0.5));
  const auto a = objective_batch(*model, *util, p, batch, 1);
  const auto b = objective_batch(*model, *util, p, batch, 3);
  EXPECT_EQ(a.value, b.value);
  EXPECT_EQ(a.grad, b.grad);
}

TEST(Objective, DivergedInstancesAreExcludedAndCounted) {
  auto model = std::make_shared<BicycleModel>();
  auto util = make_bicycle_utility();
  RecurrentPolicy p(small_shape(CellKind::plain, 4, 2, 0.2));
  MpcInstance good{Vec::Zero(4), RefTraj::Zero(1, 3), 3};
  MpcInstance bad{(Vec(4) << 19.9, 0, 30, 0).finished(), RefTraj::Zero(1, 3), 3};
  std::vector<MpcInstance> batch{good, bad, good};
  const auto obj = objective_batch(*model, *util, p, batch);
  EXPECT_EQ(obj.excluded, 1);
  EXPECT_EQ(obj.value, 0.0);
  std::vector<MpcInstance> mostly_bad{good, bad, bad};
  EXPECT_THROW(objective_batch(*model, *util, p, mostly_bad), BatchFailure);
}
