#include "test_support.hpp"

#include <gtest/gtest.h>

#include <numbers>

using namespace rmpc;
using rmpc::test::small_shape;

namespace {

Vec vec(std::initializer_list<double> v) {
  Vec out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

// x+ = x + u, l = x^2 + rho u^2, single step from x0 = 0.5 toward r = 0.
struct Toy {
  std::shared_ptr<LinearModel> model =
      std::make_shared<LinearModel>(Mat::Ones(1, 1), Mat::Ones(1, 1), Vec::Constant(1, -1), Vec::Constant(1, 1));
  double rho = 0.5;
  std::shared_ptr<QuadraticTrackingUtility> util = make_tracking_utility(1.0, Vec::Zero(1), Vec::Constant(1, rho));
  SamplerSpec sampler() const {
    SamplerSpec s;
    s.state_low = vec({0.5});
    s.state_high = vec({0.5});
    s.amplitude = {0.0, 0.0};
    s.horizon = 1;
    return s;
  }
};

TrainingConfig toy_config(OptimizerKind opt, long long iters) {
  TrainingConfig cfg;
  cfg.horizon = 1;
  cfg.batch_size = 4;
  cfg.optimizer = opt;
  cfg.learning_rate = opt == OptimizerKind::gd ? 0.5 : 0.02;
  cfg.max_iterations = iters;
  cfg.epsilon = 0.0;
  cfg.eval_every = 0;
  cfg.ema_window = 10;
  return cfg;
}

}  // namespace

TEST(Optimizer, GradientDescentStep) {
  Vec theta = vec({1.0, -2.0});
  ASSERT_TRUE(gd_step(theta, vec({0.5, -1.0}), 0.1));
  EXPECT_DOUBLE_EQ(theta[0], 0.95);
  EXPECT_DOUBLE_EQ(theta[1], -1.9);
  EXPECT_FALSE(gd_step(theta, vec({std::nan(""), 0.0}), 0.1));
  EXPECT_DOUBLE_EQ(theta[0], 0.95);
}

// First Adam step moves every coordinate by alpha * sign(g) (up to eps).
TEST(Optimizer, AdamFirstStepIsSignTimesRate) {
  Vec theta = vec({1.0, -2.0, 0.0});
  AdamState s(3);
  ASSERT_TRUE(adam_step(s, theta, vec({3.0, -0.001, 2e-3}), 0.01));
  EXPECT_NEAR(theta[0], 0.99, 1e-9);
  EXPECT_NEAR(theta[1], -1.99, 1e-5);
  EXPECT_NEAR(theta[2], -0.01, 1e-7);
}

TEST(Optimizer, AdamMomentsDecay) {
  Vec theta = Vec::Zero(1);
  AdamState s(1);
  adam_step(s, theta, vec({1.0}), 0.01);
  EXPECT_DOUBLE_EQ(s.m[0], 0.1);
  EXPECT_NEAR(s.v[0], 0.001, 1e-18);
  adam_step(s, theta, vec({0.0}), 0.01);
  EXPECT_DOUBLE_EQ(s.m[0], 0.09);
  EXPECT_NEAR(s.v[0], 0.000999, 1e-18);
  EXPECT_EQ(s.t, 2);
}

TEST(Optimizer, GlobalNormClipping) {
  Vec g = vec({3.0, 4.0});
  EXPECT_TRUE(clip_global_norm(g, 1.0));
  EXPECT_NEAR(g.norm(), 1.0, 1e-15);
  EXPECT_NEAR(g[0] / g[1], 0.75, 1e-15);
  g = vec({0.3, 0.4});
  EXPECT_FALSE(clip_global_norm(g, 1.0));
  EXPECT_FALSE(clip_global_norm(g, 0.0));
}

TEST(Sampler, DegenerateBoxReturnsThePoint) {
  SamplerSpec s;
  s.state_low = vec({0.2, -0.1});
  s.state_high = s.state_low;
  s.amplitude = {0.3, 0.3};
  s.wavelength = {4.0, 4.0};
  s.phase = {0.5, 0.5};
  s.step_length = 0.25;
  s.horizon = 6;
  Rng rng(1);
  const auto inst = sample_instance(s, rng);
  EXPECT_EQ(inst.x0, s.state_low);
  for (int j = 0; j < 6; ++j)
    EXPECT_NEAR(inst.r(0, j), 0.3 * std::sin(2 * std::numbers::pi * (j + 1) * 0.25 / 4.0 + 0.5), 1e-15);
}

TEST(Sampler, RelativeComponentIsOffsetByFirstReference) {
  SamplerSpec s;
  s.state_low = vec({-0.1, 0.0});
  s.state_high = vec({0.1, 0.0});
  s.relative_component = 0;
  s.amplitude = {1.0, 2.0};
  s.wavelength = {5.0, 10.0};
  s.horizon = 3;
  Rng rng(2);
  for (int t = 0; t < 50; ++t) {
    const auto inst = sample_instance(s, rng);
    EXPECT_LE(std::abs(inst.x0[0] - inst.r(0, 0)), 0.1);
  }
}

TEST(Sampler, SameStateSameBatch) {
  SamplerSpec s;
  s.state_low = vec({-1, -1});
  s.state_high = vec({1, 1});
  s.horizon = 4;
  Rng a = Rng::derive(7, "sampler"), b = Rng::derive(7, "sampler");
  const auto ba = sample_batch(s, a, 10), bb = sample_batch(s, b, 10);
  for (int i = 0; i < 10; ++i) {
    EXPECT_EQ(ba[i].x0, bb[i].x0);
    EXPECT_EQ(ba[i].r, bb[i].r);
  }
  Rng c = Rng::derive(8, "sampler");
  EXPECT_NE(sample_batch(s, c, 1)[0].x0, ba[0].x0);
}

TEST(Sampler, PiecewiseConstantSegments) {
  SamplerSpec s;
  s.state_low = vec({0});
  s.state_high = vec({0});
  s.family = ReferenceFamily::piecewise_constant;
  s.amplitude = {0, 1};
  s.segment_steps = {3, 3};
  s.horizon = 9;
  Rng rng(4);
  const auto r = sample_instance(s, rng).r;
  for (int seg = 0; seg < 3; ++seg) {
    EXPECT_EQ(r(0, 3 * seg), r(0, 3 * seg + 2));
    EXPECT_LE(std::abs(r(0, 3 * seg)), 1.0);
  }
}

TEST(Train, ZeroIterationsLeavesPolicyUnchanged) {
  Toy toy;
  RecurrentPolicy p(small_shape(CellKind::gated, 1, 3));
  p.init_params(1);
  const Vec before = p.params();
  int checkpoints = 0;
  TrainingHooks hooks;
  hooks.on_checkpoint = [&](long long it, const RecurrentPolicy&, bool final) {
    EXPECT_EQ(it, 0);
    EXPECT_TRUE(final);
    ++checkpoints;
  };
  const auto h = train(toy_config(OptimizerKind::adam, 0), toy.sampler(), *toy.model, *toy.util, p, hooks);
  EXPECT_EQ(p.params(), before);
  EXPECT_EQ(h.iterations, 0);
  EXPECT_EQ(checkpoints, 1);
}

// The one-step optimum is u* = -x0 / (1 + rho).
TEST(Train, ToyProblemConvergesToAnalyticOptimum) {
  Toy toy;
  const double u_star = -0.5 / (1.0 + toy.rho);
  for (auto opt : {OptimizerKind::gd, OptimizerKind::adam}) {
    RecurrentPolicy p(small_shape(CellKind::plain, 1, 3));
    p.init_params(2);
    const auto h = train(toy_config(opt, opt == OptimizerKind::gd ? 400 : 3000), toy.sampler(), *toy.model,
                         *toy.util, p);
    EXPECT_NEAR(p.evaluate(vec({0.5}), RefTraj::Zero(1, 1), 1)[0], u_star, 1e-3) << to_string(opt);
    if (opt == OptimizerKind::gd) {
      for (std::size_t i = 1; i < h.records.size(); ++i)
        EXPECT_LE(h.records[i].cost, h.records[i - 1].cost + 1e-15) << i;
    }
  }
}

TEST(Train, FixedSeedIsBitReproducible) {
  auto model = std::make_shared<BicycleModel>();
  auto util = make_bicycle_utility();
  SamplerSpec s;
  s.state_low = vec({-1, -0.1, -0.5, -0.2});
  s.state_high = -s.state_low;
  s.amplitude = {0.5, 1.0};
  s.wavelength = {60, 120};
  s.step_length = 0.8;
  TrainingConfig cfg;
  cfg.horizon = 4;
  cfg.batch_size = 40;
  cfg.learning_rate = 1e-3;
  cfg.max_iterations = 5;
  cfg.eval_every = 0;
  RecurrentPolicy a(small_shape(CellKind::gated, 4, 6, 0.2)), b = a;
  a.init_params(3);
  b.init_params(3);
  cfg.workers = 1;
  const auto ha = train(cfg, s, *model, *util, a);
  cfg.workers = 2;
  const auto hb = train(cfg, s, *model, *util, b);
  EXPECT_EQ(a.params(), b.params());
  ASSERT_EQ(ha.records.size(), hb.records.size());
  for (std::size_t i = 0; i < ha.records.size(); ++i) EXPECT_EQ(ha.records[i].cost, hb.records[i].cost);
}

TEST(Train, AbortsWhenEveryBatchDiverges) {
  auto model = std::make_shared<BicycleModel>();
  SamplerSpec s;
  s.state_low = vec({25, 0, 0, 0});
  s.state_high = vec({30, 0, 0, 0});
  s.amplitude = {0, 0};
  TrainingConfig cfg;
  cfg.horizon = 2;
  cfg.batch_size = 4;
  cfg.max_iterations = 100;
  cfg.eval_every = 0;
  RecurrentPolicy p(small_shape(CellKind::plain, 4, 2, 0.2));
  EXPECT_THROW(train(cfg, s, *model, *make_bicycle_utility(), p), TrainingAborted);
}

TEST(Train, SmoothedCostStopsWhenFlat) {
  Toy toy;
  auto cfg = toy_config(OptimizerKind::gd, 5000);
  cfg.epsilon = 1e-9;
  RecurrentPolicy p(small_shape(CellKind::plain, 1, 3));
  p.init_params(2);
  const auto h = train(cfg, toy.sampler(), *toy.model, *toy.util, p);
  EXPECT_TRUE(h.converged);
  EXPECT_EQ(h.stop_reason, "converged");
  EXPECT_LT(h.iterations, 5000);
  EXPECT_GT(h.iterations, cfg.ema_window);
}

TEST(Train, CheckpointsAndEvaluationsFollowSchedule) {
  Toy toy;
  auto cfg = toy_config(OptimizerKind::adam, 25);
  cfg.eval_every = 10;
  RecurrentPolicy p(small_shape(CellKind::plain, 1, 2));
  std::vector<std::pair<long long, bool>> seen;
  TrainingHooks hooks;
  hooks.on_checkpoint = [&](long long it, const RecurrentPolicy&, bool final) { seen.emplace_back(it, final); };
  hooks.evaluate = [](const RecurrentPolicy&) { return std::vector<double>{0.0}; };
  const auto h = train(cfg, toy.sampler(), *toy.model, *toy.util, p, hooks);
  const std::vector<std::pair<long long, bool>> expected{{10, false}, {20, false}, {25, true}};
  EXPECT_EQ(seen, expected);
  EXPECT_EQ(h.snapshots.size(), 3u);
}
