#pragma once

// Discrete-time system models x_{i+1} = f(x_i, u_i) with analytic Jacobians.

#include "rmpc/types.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <numbers>
#include <string>

namespace rmpc {

struct Jacobians {
  Mat fx;  // n x n
  Mat fu;  // n x m
};

class SystemModel {
 public:
  SystemModel(int n, int m, Vec u_min, Vec u_max)
      : n_(n), m_(m), u_min_(std::move(u_min)), u_max_(std::move(u_max)) {
    require(u_min_.size() == m_ && u_max_.size() == m_, "control bound size mismatch");
    require(((u_max_ - u_min_).array() > 0).all(), "control bounds must be non-degenerate");
  }
  virtual ~SystemModel() = default;

  virtual std::string kind() const = 0;
  // Named parameters, used for hashing and reporting.
  virtual std::map<std::string, double> parameters() const = 0;

  int state_dim() const { return n_; }
  int input_dim() const { return m_; }
  const Vec& u_min() const { return u_min_; }
  const Vec& u_max() const { return u_max_; }

  Vec step(const Vec& x, const Vec& u) const {
    check_dims(x, u);
    return step_impl(x, u);
  }

  Jacobians jacobians(const Vec& x, const Vec& u) const {
    check_dims(x, u);
    Jacobians j{Mat::Zero(n_, n_), Mat::Zero(n_, m_)};
    jacobians_impl(x, u, j);
    return j;
  }

  // States outside the envelope abort a rollout as diverged.
  virtual bool in_envelope(const Vec& x) const {
    return x.allFinite() && x.cwiseAbs().maxCoeff() < 1e6;
  }

  Vec clamp(const Vec& u) const { return u.cwiseMax(u_min_).cwiseMin(u_max_); }

 protected:
  virtual Vec step_impl(const Vec& x, const Vec& u) const = 0;
  virtual void jacobians_impl(const Vec& x, const Vec& u, Jacobians& j) const = 0;

 private:
  void check_dims(const Vec& x, const Vec& u) const {
    if (x.size() != n_ || u.size() != m_)
      throw ContractViolation(kind() + ": state/input dimension mismatch");
  }

  int n_;
  int m_;
  Vec u_min_;
  Vec u_max_;
};

using ModelPtr = std::shared_ptr<const SystemModel>;

// x+ = A x + B u.
class LinearModel final : public SystemModel {
 public:
  LinearModel(Mat a, Mat b, Vec u_min, Vec u_max, std::string name = "linear",
              std::map<std::string, double> params = {})
      : SystemModel(static_cast<int>(a.rows()), static_cast<int>(b.cols()), std::move(u_min),
                    std::move(u_max)),
        a_(std::move(a)),
        b_(std::move(b)),
        name_(std::move(name)),
        params_(std::move(params)) {
    require(a_.rows() == a_.cols() && b_.rows() == a_.rows(), "A must be n x n and B n x m");
  }

  std::string kind() const override { return name_; }
  std::map<std::string, double> parameters() const override { return params_; }
  const Mat& a() const { return a_; }
  const Mat& b() const { return b_; }

 protected:
  Vec step_impl(const Vec& x, const Vec& u) const override { return a_ * x + b_ * u; }
  void jacobians_impl(const Vec&, const Vec&, Jacobians& j) const override {
    j.fx = a_;
    j.fu = b_;
  }

 private:
  Mat a_;
  Mat b_;
  std::string name_;
  std::map<std::string, double> params_;
};

// Position/velocity double integrator, A = [[1, dt], [0, 1]], B = [0, dt]^T.
inline std::shared_ptr<LinearModel> make_double_integrator(double dt = 0.05, double u_max = 1.0) {
  Mat a(2, 2);
  a << 1.0, dt, 0.0, 1.0;
  Mat b(2, 1);
  b << 0.0, dt;
  return std::make_shared<LinearModel>(a, b, Vec::Constant(1, -u_max), Vec::Constant(1, u_max),
                                       "double_integrator",
                                       std::map<std::string, double>{{"dt", dt}, {"u_max", u_max}});
}

// x+ = x + dt (-x^3 + u).
class ScalarCubicModel final : public SystemModel {
 public:
  explicit ScalarCubicModel(double dt = 0.1, double u_max = 1.0)
      : SystemModel(1, 1, Vec::Constant(1, -u_max), Vec::Constant(1, u_max)), dt_(dt), u_max_(u_max) {}

  std::string kind() const override { return "scalar_cubic"; }
  std::map<std::string, double> parameters() const override {
    return {{"dt", dt_}, {"u_max", u_max_}};
  }

 protected:
  Vec step_impl(const Vec& x, const Vec& u) const override {
    return Vec::Constant(1, x[0] + dt_ * (-x[0] * x[0] * x[0] + u[0]));
  }
  void jacobians_impl(const Vec& x, const Vec&, Jacobians& j) const override {
    j.fx(0, 0) = 1.0 - 3.0 * dt_ * x[0] * x[0];
    j.fu(0, 0) = dt_;
  }

 private:
  double dt_;
  double u_max_;
};

// ---------------------------------------------------------------------------
// Lateral vehicle dynamics with Fiala tire forces.

struct TireForceParams {
  double stiffness;  // C > 0 [N/rad]
  double mu;         // friction coefficient
  double load;       // F_z [N]
};

// Breakpoint where the cubic reaches its extremum: tan(alpha_max) = 3 mu Fz / C.
inline double fiala_saturation_tan(const TireForceParams& p) {
  return 3.0 * p.mu * p.load / p.stiffness;
}

inline void check_tire_params(const TireForceParams& p) {
  if (!(p.stiffness > 0.0 && p.mu > 0.0 && p.load > 0.0))
    throw ContractViolation("tire parameters must be positive");
}

// Lateral force; odd in alpha, |F| <= mu Fz, flat beyond the breakpoint.
inline double fiala_force(double alpha, const TireForceParams& p) {
  check_tire_params(p);
  if (!(std::abs(alpha) < std::numbers::pi / 2))
    throw NumericDomainError("fiala_force: slip angle outside (-pi/2, pi/2)");
  const double t = std::tan(alpha);
  const double mf = p.mu * p.load;
  if (std::abs(t) <= fiala_saturation_tan(p)) {
    const double c = p.stiffness;
    return -c * t * (c * c * t * t / (27.0 * mf * mf) - c * std::abs(t) / (3.0 * mf) + 1.0);
  }
  return alpha > 0.0 ? -mf : mf;
}

// dF/dalpha. At the breakpoint the unsaturated branch is used (its slope is
// zero there, so both one-sided derivatives agree).
inline double fiala_force_derivative(double alpha, const TireForceParams& p) {
  check_tire_params(p);
  if (!(std::abs(alpha) < std::numbers::pi / 2))
    throw NumericDomainError("fiala_force: slip angle outside (-pi/2, pi/2)");
  const double t = std::tan(alpha);
  if (std::abs(t) > fiala_saturation_tan(p)) return 0.0;
  const double c = p.stiffness;
  const double mf = p.mu * p.load;
  const double dfdt =
      -c + 2.0 * c * c * std::abs(t) / (3.0 * mf) - c * c * c * t * t / (9.0 * mf * mf);
  return dfdt * (1.0 + t * t);
}

struct BicycleParams {
  double vx = 16.0;       // [m/s]
  double k1 = -88000.0;   // front cornering stiffness [N/rad]
  double k2 = -94000.0;   // rear cornering stiffness [N/rad]
  double mass = 1500.0;   // [kg]
  double a = 1.14;        // CG to front axle [m]
  double b = 1.40;        // CG to rear axle [m]
  double iz = 2420.0;     // yaw inertia [kg m^2]
  double mu = 1.0;
  double frequency = 20.0;  // [Hz]
  double gravity = 9.81;
  double u_max = 0.2;  // front wheel angle bound [rad]

  double front_load() const { return b / (a + b) * mass * gravity; }
  double rear_load() const { return a / (a + b) * mass * gravity; }
  TireForceParams front_tire() const { return {std::abs(k1), mu, front_load()}; }
  TireForceParams rear_tire() const { return {std::abs(k2), mu, rear_load()}; }
};

struct SlipAngles {
  double front;
  double rear;
};

// State order: [y, phi, v_y, omega_r].
inline SlipAngles slip_angles(const Vec& x, double delta, const BicycleParams& p) {
  if (!(p.vx > 0.0)) throw NumericDomainError("slip_angles: longitudinal speed must be positive");
  return {std::atan((x[2] + p.a * x[3]) / p.vx) - delta, std::atan((x[2] - p.b * x[3]) / p.vx)};
}

class BicycleModel final : public SystemModel {
 public:
  explicit BicycleModel(BicycleParams p = {})
      : SystemModel(4, 1, Vec::Constant(1, -p.u_max), Vec::Constant(1, p.u_max)), p_(p) {
    if (!(p_.vx > 0.0)) throw NumericDomainError("bicycle: vx must be positive");
    require(p_.mass > 0 && p_.iz > 0 && p_.a > 0 && p_.b > 0 && p_.frequency > 0,
            "bicycle: mass, inertia, axle distances and frequency must be positive");
    check_tire_params(p_.front_tire());
    check_tire_params(p_.rear_tire());
  }

  std::string kind() const override { return "bicycle"; }
  std::map<std::string, double> parameters() const override {
    return {{"vx", p_.vx}, {"k1", p_.k1},     {"k2", p_.k2}, {"mass", p_.mass},
            {"a", p_.a},   {"b", p_.b},       {"iz", p_.iz}, {"mu", p_.mu},
            {"frequency", p_.frequency},      {"u_max", p_.u_max}};
  }
  const BicycleParams& params() const { return p_; }

  bool in_envelope(const Vec& x) const override {
    return x.allFinite() && std::abs(x[0]) <= 20.0 && std::abs(x[1]) <= std::numbers::pi / 2;
  }

 protected:
  Vec step_impl(const Vec& x, const Vec& u) const override {
    const double delta = u[0];
    const SlipAngles s = slip_angles(x, delta, p_);
    const double ff = fiala_force(s.front, p_.front_tire());
    const double fr = fiala_force(s.rear, p_.rear_tire());
    if (!std::isfinite(ff)) throw NumericDomainError("bicycle: front tire force not finite");
    if (!std::isfinite(fr)) throw NumericDomainError("bicycle: rear tire force not finite");
    const double dt = 1.0 / p_.frequency;
    const double phi = x[1];
    const double vy = x[2];
    const double w = x[3];
    const double cd = std::cos(delta);
    Vec next(4);
    next[0] = x[0] + dt * (p_.vx * std::sin(phi) + vy * std::cos(phi));
    next[1] = phi + dt * w;
    next[2] = vy + dt * ((ff * cd + fr) / p_.mass - p_.vx * w);
    next[3] = w + dt * ((p_.a * ff * cd - p_.b * fr) / p_.iz);
    if (!next.allFinite()) throw NumericDomainError("bicycle: next state not finite");
    return next;
  }

  void jacobians_impl(const Vec& x, const Vec& u, Jacobians& j) const override {
    const double delta = u[0];
    const SlipAngles s = slip_angles(x, delta, p_);
    const auto tf = p_.front_tire();
    const auto tr = p_.rear_tire();
    const double ff = fiala_force(s.front, tf);
    const double fr = fiala_force(s.rear, tr);
    const double dff = fiala_force_derivative(s.front, tf);
    const double dfr = fiala_force_derivative(s.rear, tr);

    const double dt = 1.0 / p_.frequency;
    const double phi = x[1];
    const double vy = x[2];
    const double w = x[3];
    const double qf = (vy + p_.a * w) / p_.vx;
    const double qr = (vy - p_.b * w) / p_.vx;
    // d(alpha)/d(v_y) for each axle.
    const double cf = 1.0 / (p_.vx * (1.0 + qf * qf));
    const double cr = 1.0 / (p_.vx * (1.0 + qr * qr));
    const double cd = std::cos(delta);
    const double sd = std::sin(delta);

    // Tire force partials with respect to (v_y, omega_r, delta).
    const double ff_vy = dff * cf, ff_w = dff * p_.a * cf, ff_d = -dff;
    const double fr_vy = dfr * cr, fr_w = -dfr * p_.b * cr;

    Mat& fx = j.fx;
    fx.setIdentity();
    fx(0, 1) += dt * (p_.vx * std::cos(phi) - vy * std::sin(phi));
    fx(0, 2) += dt * std::cos(phi);
    fx(1, 3) += dt;
    fx(2, 2) += dt * (ff_vy * cd + fr_vy) / p_.mass;
    fx(2, 3) += dt * ((ff_w * cd + fr_w) / p_.mass - p_.vx);
    fx(3, 2) += dt * (p_.a * ff_vy * cd - p_.b * fr_vy) / p_.iz;
    fx(3, 3) += dt * (p_.a * ff_w * cd - p_.b * fr_w) / p_.iz;

    j.fu(0, 0) = 0.0;
    j.fu(1, 0) = 0.0;
    j.fu(2, 0) = dt * (ff_d * cd - ff * sd) / p_.mass;
    j.fu(3, 0) = dt * p_.a * (ff_d * cd - ff * sd) / p_.iz;
  }

 private:
  BicycleParams p_;
};

// Builds a model from its config name and parameter overrides.
inline ModelPtr make_model(const std::string& kind, const std::map<std::string, double>& overrides) {
  auto get = [&](const char* key, double fallback) {
    auto it = overrides.find(key);
    return it == overrides.end() ? fallback : it->second;
  };
  auto reject_unknown = [&](std::initializer_list<const char*> known) {
    for (const auto& [k, v] : overrides) {
      bool ok = false;
      for (const char* name : known) ok = ok || k == name;
      if (!ok) throw ConfigError("unknown parameter '" + k + "' for model '" + kind + "'");
    }
  };
  if (kind == "double_integrator") {
    reject_unknown({"dt", "u_max"});
    return make_double_integrator(get("dt", 0.05), get("u_max", 1.0));
  }
  if (kind == "scalar_cubic") {
    reject_unknown({"dt", "u_max"});
    return std::make_shared<ScalarCubicModel>(get("dt", 0.1), get("u_max", 1.0));
  }
  if (kind == "bicycle") {
    reject_unknown({"vx", "k1", "k2", "mass", "a", "b", "iz", "mu", "frequency", "u_max"});
    BicycleParams p;
    p.vx = get("vx", p.vx);
    p.k1 = get("k1", p.k1);
    p.k2 = get("k2", p.k2);
    p.mass = get("mass", p.mass);
    p.a = get("a", p.a);
    p.b = get("b", p.b);
    p.iz = get("iz", p.iz);
    p.mu = get("mu", p.mu);
    p.frequency = get("frequency", p.frequency);
    p.u_max = get("u_max", p.u_max);
    return std::make_shared<BicycleModel>(p);
  }
  throw ConfigError("unknown model kind '" + kind + "'");
}

}  // namespace rmpc
