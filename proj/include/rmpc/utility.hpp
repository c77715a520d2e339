#pragma once

#include "rmpc/types.hpp"

#include <memory>
#include <string>

namespace rmpc {

// Per-step cost l(x_i, r_i, u_{i-1}) >= 0.
class Utility {
 public:
  virtual ~Utility() = default;
  virtual int state_dim() const = 0;
  virtual int input_dim() const = 0;
  virtual int ref_dim() const = 0;
  virtual double evaluate(const Vec& x, const Vec& r, const Vec& u) const = 0;
  virtual Vec grad_x(const Vec& x, const Vec& r, const Vec& u) const = 0;
  virtual Vec grad_u(const Vec& x, const Vec& r, const Vec& u) const = 0;
  // Canonical text, exact to the bit; used in cache keys.
  virtual std::string describe() const = 0;
};

using UtilityPtr = std::shared_ptr<const Utility>;

// l = sum_j w_j ((C x)_j - r_j)^2 + sum_k q_k x_k^2 + sum_k rho_k u_k^2
class QuadraticTrackingUtility final : public Utility {
 public:
  QuadraticTrackingUtility(Mat output_map, Vec track_weights, Vec state_weights, Vec control_weights)
      : c_(std::move(output_map)),
        w_(std::move(track_weights)),
        q_(std::move(state_weights)),
        rho_(std::move(control_weights)) {
    require(w_.size() == c_.rows(), "track weight count must match output rows");
    require(q_.size() == c_.cols(), "state weight count must match state dimension");
    require((w_.array() >= 0).all() && (q_.array() >= 0).all() && (rho_.array() >= 0).all(),
            "utility weights must be non-negative");
  }

  int state_dim() const override { return static_cast<int>(c_.cols()); }
  int input_dim() const override { return static_cast<int>(rho_.size()); }
  int ref_dim() const override { return static_cast<int>(c_.rows()); }

  const Mat& output_map() const { return c_; }
  const Vec& track_weights() const { return w_; }
  const Vec& state_weights() const { return q_; }
  const Vec& control_weights() const { return rho_; }

  double evaluate(const Vec& x, const Vec& r, const Vec& u) const override {
    check(x, r, u);
    const Vec e = c_ * x - r;
    return (w_.array() * e.array().square()).sum() + (q_.array() * x.array().square()).sum() +
           (rho_.array() * u.array().square()).sum();
  }
  Vec grad_x(const Vec& x, const Vec& r, const Vec& u) const override {
    check(x, r, u);
    const Vec e = c_ * x - r;
    return 2.0 * (c_.transpose() * (w_.array() * e.array()).matrix() +
                  (q_.array() * x.array()).matrix());
  }
  Vec grad_u(const Vec& x, const Vec& r, const Vec& u) const override {
    check(x, r, u);
    return 2.0 * (rho_.array() * u.array()).matrix();
  }
  std::string describe() const override {
    return "quadratic C=" + hex_join(c_.reshaped()) + " w=" + hex_join(w_) + " q=" + hex_join(q_) +
           " rho=" + hex_join(rho_);
  }

 private:
  void check(const Vec& x, const Vec& r, const Vec& u) const {
    if (x.size() != c_.cols() || r.size() != c_.rows() || u.size() != rho_.size())
      throw ContractViolation("utility: dimension mismatch");
  }

  Mat c_;
  Vec w_;
  Vec q_;
  Vec rho_;
};

// Tracks the first state component.
inline std::shared_ptr<QuadraticTrackingUtility> make_tracking_utility(double track_weight,
                                                                       Vec state_weights,
                                                                       Vec control_weights) {
  Mat c = Mat::Zero(1, state_weights.size());
  c(0, 0) = 1.0;
  return std::make_shared<QuadraticTrackingUtility>(c, Vec::Constant(1, track_weight),
                                                    std::move(state_weights),
                                                    std::move(control_weights));
}

// ([1,0,0,0]x - r)^2 + 10 u^2 + ([0,0,0,1]x)^2
inline std::shared_ptr<QuadraticTrackingUtility> make_bicycle_utility() {
  return make_tracking_utility(1.0, (Vec(4) << 0, 0, 0, 1).finished(), Vec::Constant(1, 10.0));
}

}  // namespace rmpc
