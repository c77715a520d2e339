#include "rmpc/dynamics.hpp"
#include "rmpc/rng.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace rmpc;

namespace {

Vec vec(std::initializer_list<double> v) {
  Vec out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

// Values from tests/oracles/bicycle_formulas.py.
constexpr double kFrontLoad = 8110.6299212598415;
constexpr double kRearLoad = 6604.370078740158;
constexpr double kFialaSmall = -848.5754651663684;  // alpha 0.01, C 88000, mu 1, Fz 8108.3
const double kStep[4] = {0.025, 0.005, 0.3064134619750173, 0.11930552126026633};

}  // namespace

TEST(Bicycle, ZeroStateIsFixedPoint) {
  BicycleModel m;
  const Vec x = m.step(Vec::Zero(4), Vec::Zero(1));
  EXPECT_EQ(x, Vec::Zero(4));
}

TEST(Bicycle, StepMatchesScriptedFormulas) {
  BicycleModel m;
  const Vec x = m.step(vec({0, 0, 0.5, 0.1}), vec({0.02}));
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(x[i], kStep[i], 1e-12 * (1 + std::abs(kStep[i]))) << i;
}

TEST(Bicycle, TireLoadsFromAxleGeometry) {
  BicycleParams p;
  EXPECT_NEAR(p.front_load(), kFrontLoad, 1e-9);
  EXPECT_NEAR(p.rear_load(), kRearLoad, 1e-9);
}

TEST(Bicycle, JacobianAtOriginHasEulerScaledHeadingTerm) {
  BicycleModel m;
  const Jacobians j = m.jacobians(Vec::Zero(4), Vec::Zero(1));
  EXPECT_DOUBLE_EQ(j.fx(0, 1), 0.8);
}

TEST(Bicycle, EnvelopeBounds) {
  BicycleModel m;
  EXPECT_TRUE(m.in_envelope(vec({19.9, 1.5, 0, 0})));
  EXPECT_FALSE(m.in_envelope(vec({20.1, 0, 0, 0})));
  EXPECT_FALSE(m.in_envelope(vec({0, 1.6, 0, 0})));
}

TEST(Fiala, ZeroAtZeroSlip) {
  TireForceParams p{88000, 1.0, 8108.3};
  EXPECT_EQ(fiala_force(0.0, p), 0.0);
}

TEST(Fiala, SmallSlipMatchesScriptedCubic) {
  TireForceParams p{88000, 1.0, 8108.3};
  EXPECT_NEAR(fiala_force(0.01, p), kFialaSmall, 1e-9);
}

TEST(Fiala, SaturatedBranchIsSignedFrictionLimit) {
  TireForceParams p{88000, 1.0, 8108.3};
  EXPECT_DOUBLE_EQ(fiala_force(0.5, p), -8108.3);
  EXPECT_DOUBLE_EQ(fiala_force(-0.5, p), 8108.3);
}

TEST(Fiala, OddContinuousAndBounded) {
  TireForceParams p{94000, 0.8, 6604.37};
  const double amax = std::atan(fiala_saturation_tan(p));
  for (double a = -1.5; a <= 1.5; a += 0.001) {
    EXPECT_NEAR(fiala_force(a, p), -fiala_force(-a, p), 1e-9);
    EXPECT_LE(std::abs(fiala_force(a, p)), p.mu * p.load * (1 + 1e-12));
  }
  EXPECT_NEAR(fiala_force(amax - 1e-12, p), fiala_force(amax + 1e-12, p), 1e-6);
}

TEST(Fiala, DerivativeAtBreakpointUsesUnsaturatedBranch) {
  TireForceParams p{88000, 1.0, 8108.3};
  const double amax = std::atan(fiala_saturation_tan(p));
  const double h = 1e-7;
  const double left = (fiala_force(amax, p) - fiala_force(amax - h, p)) / h;
  EXPECT_NEAR(fiala_force_derivative(amax, p), left, 1e-3 * (1 + std::abs(left)));
}

TEST(Fiala, TanSingularityIsDomainError) {
  TireForceParams p{88000, 1.0, 8108.3};
  EXPECT_THROW(fiala_force(std::numbers::pi / 2, p), NumericDomainError);
  EXPECT_THROW(fiala_force(-2.0, p), NumericDomainError);
}

TEST(SlipAngles, ZeroLateralMotion) {
  BicycleParams p;
  auto s = slip_angles(vec({0, 0, 0, 0}), 0.0, p);
  EXPECT_EQ(s.front, 0.0);
  EXPECT_EQ(s.rear, 0.0);
  s = slip_angles(vec({0, 0, 0, 0}), 0.1, p);
  EXPECT_DOUBLE_EQ(s.front, -0.1);
  EXPECT_EQ(s.rear, 0.0);
}

TEST(SlipAngles, MatchScriptedValues) {
  BicycleParams p;
  const auto s = slip_angles(vec({0, 0, 0.5, 0.1}), 0.0, p);
  EXPECT_NEAR(s.front, 0.03835617909906247, 1e-15);
  EXPECT_NEAR(s.rear, 0.022496204277883902, 1e-15);
}

TEST(SlipAngles, NonPositiveSpeedRejected) {
  BicycleParams p;
  p.vx = 0.0;
  EXPECT_THROW(slip_angles(Vec::Zero(4), 0.0, p), NumericDomainError);
}

TEST(DoubleIntegrator, StepAndJacobians) {
  auto m = make_double_integrator();
  const Vec x = m->step(vec({0, 1}), vec({0}));
  EXPECT_DOUBLE_EQ(x[0], 0.05);
  EXPECT_DOUBLE_EQ(x[1], 1.0);
  const Jacobians j = m->jacobians(vec({0.3, -2}), vec({0.4}));
  EXPECT_EQ(j.fx, m->a());
  EXPECT_EQ(j.fu, m->b());
}

TEST(DoubleIntegrator, StepIsLinear) {
  auto m = make_double_integrator();
  Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    const Vec x1 = vec({rng.uniform(-1, 1), rng.uniform(-1, 1)}), x2 = vec({rng.uniform(-1, 1), rng.uniform(-1, 1)});
    const Vec u1 = vec({rng.uniform(-0.5, 0.5)}), u2 = vec({rng.uniform(-0.5, 0.5)});
    const Vec lhs = m->step(x1 + x2, u1 + u2);
    const Vec rhs = m->step(x1, u1) + m->step(x2, u2) - m->step(Vec::Zero(2), Vec::Zero(1));
    EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-15);
  }
}

TEST(Models, DimensionMismatchIsContractViolation) {
  BicycleModel m;
  EXPECT_THROW(m.step(Vec::Zero(3), Vec::Zero(1)), ContractViolation);
  EXPECT_THROW(m.jacobians(Vec::Zero(4), Vec::Zero(2)), ContractViolation);
}

// Analytic Jacobians against central differences at 100 sampled points.
TEST(Models, JacobiansMatchFiniteDifferences) {
  std::vector<std::pair<ModelPtr, Vec>> cases{
      {make_double_integrator(), vec({2, 2})},
      {std::make_shared<ScalarCubicModel>(), vec({1.5})},
      {std::make_shared<BicycleModel>(), vec({3, 0.3, 1, 0.5})},
  };
  Rng rng(11);
  for (const auto& [model, box] : cases) {
    for (int t = 0; t < 100; ++t) {
      Vec x(box.size());
      for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = rng.uniform(-box[i], box[i]);
      const Vec u = vec({rng.uniform(model->u_min()[0], model->u_max()[0])});
      const Jacobians j = model->jacobians(x, u);
      const auto fd = test::fd_jacobians(*model, x, u, 1e-6);
      EXPECT_LT(test::rel_err(j.fx, fd.fx), 1e-6) << model->kind();
      EXPECT_LT(test::rel_err(j.fu, fd.fu), 1e-6) << model->kind();
    }
  }
}

TEST(Models, FactoryRejectsUnknownParameters) {
  EXPECT_THROW(make_model("bicycle", {{"wheelbase", 2.0}}), ConfigError);
  EXPECT_THROW(make_model("submarine", {}), ConfigError);
  const auto m = make_model("bicycle", {{"mu", 0.7}});
  EXPECT_DOUBLE_EQ(m->parameters().at("mu"), 0.7);
}
