#pragma once

#include "rmpc/types.hpp"

#include <cmath>

namespace rmpc {

// theta <- theta - alpha g. Returns false (theta untouched) on a non-finite g.
inline bool gd_step(Vec& theta, const Vec& g, double alpha) {
  require(theta.size() == g.size(), "gd_step: dimension mismatch");
  if (!g.allFinite()) return false;
  theta -= alpha * g;
  return true;
}

struct AdamState {
  Vec m;
  Vec v;
  long long t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamState() = default;
  explicit AdamState(Eigen::Index size) : m(Vec::Zero(size)), v(Vec::Zero(size)) {}
};

// Bias-corrected adaptive-moment update.
inline bool adam_step(AdamState& s, Vec& theta, const Vec& g, double alpha) {
  require(theta.size() == g.size() && s.m.size() == g.size(), "adam_step: dimension mismatch");
  if (!g.allFinite()) return false;
  ++s.t;
  s.m = s.beta1 * s.m + (1.0 - s.beta1) * g;
  s.v = s.beta2 * s.v + (1.0 - s.beta2) * g.cwiseAbs2();
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.t));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.t));
  theta.array() -= alpha * (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + s.eps);
  return true;
}

// Rescales g to at most max_norm; returns true when clipping was active.
inline bool clip_global_norm(Vec& g, double max_norm) {
  if (!(max_norm > 0.0)) return false;
  const double norm = g.norm();
  if (norm <= max_norm) return false;
  g *= max_norm / norm;
  return true;
}

}  // namespace rmpc
