#pragma once

// Numerically optimal solutions of the N-step problem
//   min_{u_0..u_{N-1} in U} sum_{i=1}^{N} l(x_i, r_i, u_{i-1}),  x_i = f(x_{i-1}, u_{i-1})
// used as ground truth for the learned policy.
//
//   solve_riccati   exact, linear model + quadratic tracking utility
//   solve_shooting  single shooting, adjoint gradients, projected Adam,
//                   projected-Newton polish, multi-restart
//   solve_grid      exhaustive lattice search (m = 1, N <= 3)

#include "rmpc/dynamics.hpp"
#include "rmpc/parallel.hpp"
#include "rmpc/rng.hpp"
#include "rmpc/utility.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace rmpc {

enum class OracleStatus { optimal, max_iters, restarts_disagree, bounds_active };

inline std::string to_string(OracleStatus s) {
  switch (s) {
    case OracleStatus::optimal: return "optimal";
    case OracleStatus::max_iters: return "max-iters";
    case OracleStatus::restarts_disagree: return "restarts-disagree";
    case OracleStatus::bounds_active: return "bounds-active";
  }
  return "?";
}

inline OracleStatus parse_oracle_status(const std::string& s) {
  if (s == "optimal") return OracleStatus::optimal;
  if (s == "max-iters") return OracleStatus::max_iters;
  if (s == "restarts-disagree") return OracleStatus::restarts_disagree;
  if (s == "bounds-active") return OracleStatus::bounds_active;
  throw ConfigError("unknown oracle status '" + s + "'");
}

struct SolverStats {
  long long iterations = 0;
  int restarts = 0;
  int agreeing = 0;
  double wall_ms = 0.0;
};

struct OracleSolution {
  Mat controls;  // m x N
  Mat states;    // n x (N+1)
  double value = 0.0;
  OracleStatus status = OracleStatus::optimal;
  SolverStats stats;

  Vec first_control() const { return controls.col(0); }
};

// Open-loop cost of a control sequence; states are written when requested.
inline double open_loop_cost(const SystemModel& model, const Utility& utility, const Vec& x0,
                             const RefTraj& r, const Mat& controls, Mat* states = nullptr) {
  const Eigen::Index horizon = controls.cols();
  require(r.cols() >= horizon, "open_loop_cost: reference shorter than horizon");
  Vec x = x0;
  if (states) {
    states->resize(x0.size(), horizon + 1);
    states->col(0) = x0;
  }
  double v = 0.0;
  for (Eigen::Index i = 0; i < horizon; ++i) {
    const Vec u = controls.col(i);
    x = model.step(x, u);
    v += utility.evaluate(x, r.col(i), u);
    if (states) states->col(i + 1) = x;
  }
  return v;
}

// Number of control entries outside [u_min, u_max] by more than `slack`.
inline int bound_violations(const SystemModel& model, const Mat& controls, double slack = 0.0) {
  int count = 0;
  for (Eigen::Index i = 0; i < controls.cols(); ++i)
    for (Eigen::Index k = 0; k < controls.rows(); ++k)
      if (controls(k, i) < model.u_min()[k] - slack || controls(k, i) > model.u_max()[k] + slack) ++count;
  return count;
}

// Solution whose value and states come from re-simulating `controls`.
inline OracleSolution make_solution(const SystemModel& model, const Utility& utility, const Vec& x0,
                                    const RefTraj& r, Mat controls, OracleStatus status,
                                    SolverStats stats = {}) {
  require(bound_violations(model, controls) == 0, "oracle solution: controls outside bounds");
  OracleSolution sol;
  sol.value = open_loop_cost(model, utility, x0, r, controls, &sol.states);
  sol.controls = std::move(controls);
  sol.status = status;
  sol.stats = stats;
  return sol;
}

using OracleFn = std::function<OracleSolution(const Vec& x0, const RefTraj& r, int horizon)>;

// ---------------------------------------------------------------------------
// Finite-horizon LQ tracking by backward recursion on V_i(x) = x'Px + 2p'x + c.

struct RiccatiSolution {
  OracleSolution solution;
  double predicted_value = 0.0;  // from the value recursion, for cross-checking
};

inline RiccatiSolution solve_riccati_detailed(const LinearModel& model,
                                              const QuadraticTrackingUtility& utility,
                                              const Vec& x0, const RefTraj& r, int horizon) {
  require(horizon >= 1 && horizon <= r.cols(), "solve_riccati: need 1 <= N <= len(r)");
  require(x0.size() == model.state_dim() && utility.state_dim() == model.state_dim() &&
              utility.input_dim() == model.input_dim() && r.rows() == utility.ref_dim(),
          "solve_riccati: dimension mismatch");
  const auto t0 = std::chrono::steady_clock::now();
  const Mat& a = model.a();
  const Mat& b = model.b();
  const Mat& c = utility.output_map();
  const Mat w = utility.track_weights().asDiagonal();
  const Mat q = Mat(utility.state_weights().asDiagonal()) + c.transpose() * w * c;
  const Mat rho = utility.control_weights().asDiagonal();
  const int n = model.state_dim();

  std::vector<Mat> gains(horizon);
  std::vector<Vec> offsets(horizon);
  Mat p_mat = Mat::Zero(n, n);
  Vec p_vec = Vec::Zero(n);
  double p_const = 0.0;
  for (int i = horizon - 1; i >= 0; --i) {
    const Vec ri = r.col(i);
    const Mat s = q + p_mat;
    const Vec sv = -(c.transpose() * (w * ri)) + p_vec;
    const double sc = ri.dot(w * ri) + p_const;
    const Mat m = rho + b.transpose() * s * b;
    const Eigen::LDLT<Mat> mf(m);
    const Mat bs = b.transpose() * s;
    gains[i] = mf.solve(bs * a);
    offsets[i] = mf.solve(b.transpose() * sv);
    p_mat = a.transpose() * s * a - (bs * a).transpose() * gains[i];
    p_mat = 0.5 * (p_mat + p_mat.transpose()).eval();
    p_vec = a.transpose() * sv - (bs * a).transpose() * offsets[i];
    p_const = sc - (b.transpose() * sv).dot(offsets[i]);
  }

  Mat controls(model.input_dim(), horizon);
  Vec x = x0;
  for (int i = 0; i < horizon; ++i) {
    controls.col(i) = -gains[i] * x - offsets[i];
    x = model.step(x, controls.col(i));
  }
  const bool active = bound_violations(model, controls) > 0;
  if (active)
    for (int i = 0; i < horizon; ++i) controls.col(i) = model.clamp(controls.col(i));

  SolverStats stats;
  stats.iterations = horizon;
  stats.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  RiccatiSolution out;
  out.predicted_value = x0.dot(p_mat * x0) + 2.0 * p_vec.dot(x0) + p_const;
  out.solution = make_solution(model, utility, x0, r, std::move(controls),
                               active ? OracleStatus::bounds_active : OracleStatus::optimal, stats);
  return out;
}

inline OracleSolution solve_riccati(const LinearModel& model, const QuadraticTrackingUtility& utility,
                                    const Vec& x0, const RefTraj& r, int horizon) {
  return solve_riccati_detailed(model, utility, x0, r, horizon).solution;
}

// ---------------------------------------------------------------------------
// Single shooting.

struct ShootingOptions {
  int restarts = 5;
  int iterations = 2000;
  double step = 0.05;  // Adam step on controls normalized to [-1, 1]
  bool polish = true;
  int polish_iterations = 50;
  double agree_tol = 1e-5;  // relative, on V*
  std::uint64_t seed = 0;
  int workers = 1;
};

namespace detail {

// Cost and adjoint gradient with respect to u (m x N).
inline double shooting_value_grad(const SystemModel& model, const Utility& utility, const Vec& x0,
                                  const RefTraj& r, const Mat& u, Mat* grad) {
  const Eigen::Index horizon = u.cols();
  Mat xs(x0.size(), horizon + 1);
  xs.col(0) = x0;
  double v = 0.0;
  try {
    for (Eigen::Index i = 0; i < horizon; ++i) {
      xs.col(i + 1) = model.step(xs.col(i), u.col(i));
      v += utility.evaluate(xs.col(i + 1), r.col(i), u.col(i));
    }
  } catch (const NumericDomainError&) {
    return std::numeric_limits<double>::infinity();
  }
  if (!std::isfinite(v)) return std::numeric_limits<double>::infinity();
  if (grad) {
    grad->resize(u.rows(), horizon);
    Vec lam = Vec::Zero(x0.size());
    for (Eigen::Index i = horizon - 1; i >= 0; --i) {
      const Vec xi = xs.col(i + 1);
      const Vec ui = u.col(i);
      const Vec ri = r.col(i);
      lam += utility.grad_x(xi, ri, ui);
      const Jacobians jac = model.jacobians(xs.col(i), ui);
      grad->col(i) = utility.grad_u(xi, ri, ui) + jac.fu.transpose() * lam;
      lam = jac.fx.transpose() * lam;
    }
  }
  return v;
}

struct ShootingRun {
  Mat u;
  double value = std::numeric_limits<double>::infinity();
  long long iterations = 0;
  bool converged = false;
};

// Works on z = (u - mid) / half in [-1, 1].
class NormalizedProblem {
 public:
  NormalizedProblem(const SystemModel& model, const Utility& utility, const Vec& x0, const RefTraj& r,
                    int horizon)
      : model_(model), utility_(utility), x0_(x0), r_(r.leftCols(horizon)), horizon_(horizon) {
    mid_ = 0.5 * (model.u_max() + model.u_min());
    half_ = 0.5 * (model.u_max() - model.u_min());
  }

  Mat to_u(const Mat& z) const {
    return (half_.asDiagonal() * z).colwise() + mid_;
  }
  Mat to_z(const Mat& u) const {
    return half_.cwiseInverse().asDiagonal() * (u.colwise() - mid_);
  }
  double value(const Mat& z, Mat* gz = nullptr) const {
    Mat gu;
    const double v = shooting_value_grad(model_, utility_, x0_, r_, to_u(z), gz ? &gu : nullptr);
    if (gz && std::isfinite(v)) *gz = half_.asDiagonal() * gu;
    return v;
  }
  int rows() const { return static_cast<int>(mid_.size()); }
  int horizon() const { return horizon_; }

 private:
  const SystemModel& model_;
  const Utility& utility_;
  Vec x0_;
  RefTraj r_;
  int horizon_;
  Vec mid_, half_;
};

inline Mat project_box(const Mat& z) { return z.cwiseMax(-1.0).cwiseMin(1.0); }

inline double projected_gradient_norm(const Mat& z, const Mat& g) {
  return (z - project_box(z - g)).cwiseAbs().maxCoeff();
}

// Projected Newton iterations with a finite-difference Hessian of the
// adjoint gradient, restricted to variables not pinned at a bound.
inline void polish(const NormalizedProblem& prob, ShootingRun& run, int max_iters) {
  const int m = prob.rows();
  const int dim = m * prob.horizon();
  Mat z = run.u;
  Mat g;
  double v = prob.value(z, &g);
  if (!std::isfinite(v)) return;
  constexpr double kPin = 1e-12;
  constexpr double kFd = 1e-5;
  for (int it = 0; it < max_iters; ++it) {
    ++run.iterations;
    const double scale = std::max(1.0, std::abs(v));
    const double pg = projected_gradient_norm(z, g);
    if (pg <= 1e-10 * scale) {
      run.converged = true;
      break;
    }
    std::vector<int> free;
    for (int k = 0; k < dim; ++k) {
      const double zk = z.data()[k];
      const double gk = g.data()[k];
      const bool pinned = (zk <= -1.0 + kPin && gk > 0.0) || (zk >= 1.0 - kPin && gk < 0.0);
      if (!pinned) free.push_back(k);
    }
    Mat direction = Mat::Zero(m, prob.horizon());
    if (!free.empty()) {
      const auto nf = static_cast<Eigen::Index>(free.size());
      Mat h(nf, nf);
      Vec gf(nf);
      for (Eigen::Index a = 0; a < nf; ++a) gf[a] = g.data()[free[a]];
      for (Eigen::Index a = 0; a < nf; ++a) {
        Mat zp = z, zm = z, gp, gm;
        zp.data()[free[a]] += kFd;
        zm.data()[free[a]] -= kFd;
        const double vp = prob.value(zp, &gp);
        const double vm = prob.value(zm, &gm);
        if (!std::isfinite(vp) || !std::isfinite(vm)) return;
        for (Eigen::Index b = 0; b < nf; ++b) h(b, a) = (gp.data()[free[b]] - gm.data()[free[b]]) / (2 * kFd);
      }
      h = 0.5 * (h + h.transpose()).eval();
      double lambda = 0.0;
      Vec d;
      for (int attempt = 0; attempt < 30; ++attempt) {
        Eigen::LLT<Mat> llt(h + lambda * Mat::Identity(nf, nf));
        if (llt.info() == Eigen::Success) {
          d = llt.solve(-gf);
          if (d.dot(gf) < 0.0) break;
        }
        lambda = lambda == 0.0 ? 1e-8 * std::max(1.0, h.diagonal().cwiseAbs().maxCoeff()) : 10.0 * lambda;
        d.resize(0);
      }
      if (d.size() == 0) d = -gf;
      for (Eigen::Index a = 0; a < nf; ++a) direction.data()[free[a]] = d[a];
    }
    // Backtracking on the projected path.
    bool accepted = false;
    for (int attempt = 0; attempt < 40 && !accepted; ++attempt) {
      const double t = std::ldexp(1.0, -attempt);
      Mat zn = project_box(z + t * direction);
      Mat gn;
      const double vn = prob.value(zn, &gn);
      if (std::isfinite(vn) && vn <= v && vn <= v + 1e-4 * (g.array() * (zn - z).array()).sum()) {
        accepted = vn < v;
        z = std::move(zn);
        g = std::move(gn);
        v = vn;
      }
    }
    if (!accepted) {
      // No further decrease at working precision.
      run.converged = projected_gradient_norm(z, g) <= 1e-6 * std::max(1.0, std::abs(v));
      break;
    }
  }
  run.u = z;
  run.value = v;
}

inline ShootingRun shooting_restart(const NormalizedProblem& prob, const Mat& z_init,
                                    const ShootingOptions& opts) {
  ShootingRun run;
  Mat z = project_box(z_init);
  Mat m1 = Mat::Zero(z.rows(), z.cols());
  Mat m2 = m1;
  Mat g;
  Mat best_z = z;
  double best_v = prob.value(z, &g);
  const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  for (int it = 1; it <= opts.iterations; ++it) {
    if (!std::isfinite(best_v)) break;
    m1 = b1 * m1 + (1 - b1) * g;
    m2 = b2 * m2 + (1 - b2) * g.cwiseAbs2();
    const double c1 = 1 - std::pow(b1, it), c2 = 1 - std::pow(b2, it);
    z = project_box(z.array() - opts.step * (m1.array() / c1) / ((m2.array() / c2).sqrt() + eps));
    const double v = prob.value(z, &g);
    ++run.iterations;
    if (!std::isfinite(v)) break;
    if (v < best_v) {
      best_v = v;
      best_z = z;
    }
  }
  run.u = best_z;
  run.value = best_v;
  if (opts.polish && std::isfinite(best_v)) {
    polish(prob, run, opts.polish_iterations);
  } else if (std::isfinite(best_v)) {
    Mat gb;
    prob.value(best_z, &gb);
    run.converged = projected_gradient_norm(best_z, gb) <= 1e-6 * std::max(1.0, std::abs(best_v));
  }
  return run;
}

}  // namespace detail

inline OracleSolution solve_shooting(const SystemModel& model, const Utility& utility, const Vec& x0,
                                     const RefTraj& r, int horizon, const ShootingOptions& opts = {}) {
  require(horizon >= 1 && horizon <= r.cols(), "solve_shooting: need 1 <= N <= len(r)");
  require(opts.restarts >= 1, "solve_shooting: need at least one restart");
  const auto t0 = std::chrono::steady_clock::now();
  const detail::NormalizedProblem prob(model, utility, x0, r, horizon);
  const int m = model.input_dim();

  std::vector<Mat> starts(opts.restarts);
  starts[0] = Mat::Zero(m, horizon);
  for (int k = 1; k < opts.restarts; ++k) {
    Rng rng = Rng::derive(opts.seed, "shooting-restart", static_cast<std::uint64_t>(k));
    starts[k].resize(m, horizon);
    for (Eigen::Index i = 0; i < starts[k].size(); ++i) starts[k].data()[i] = rng.uniform(-1.0, 1.0);
  }
  std::vector<detail::ShootingRun> runs(opts.restarts);
  parallel_for(runs.size(), opts.workers,
               [&](std::size_t k) { runs[k] = detail::shooting_restart(prob, starts[k], opts); });

  std::size_t best = 0;
  for (std::size_t k = 1; k < runs.size(); ++k)
    if (runs[k].value < runs[best].value) best = k;  // ties keep the lower index
  if (!std::isfinite(runs[best].value))
    throw NumericDomainError("solve_shooting: no restart produced a finite cost");

  SolverStats stats;
  stats.restarts = opts.restarts;
  const double tol = opts.agree_tol * std::max(1.0, std::abs(runs[best].value));
  for (const auto& run : runs) {
    stats.iterations += run.iterations;
    if (std::abs(run.value - runs[best].value) <= tol) ++stats.agreeing;
  }
  OracleStatus status = OracleStatus::optimal;
  if (stats.agreeing < 2 && opts.restarts >= 2)
    status = OracleStatus::restarts_disagree;
  else if (!runs[best].converged)
    status = OracleStatus::max_iters;
  Mat u = prob.to_u(runs[best].u);
  for (Eigen::Index i = 0; i < u.cols(); ++i) u.col(i) = model.clamp(u.col(i));
  stats.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return make_solution(model, utility, x0, r, std::move(u), status, stats);
}

// ---------------------------------------------------------------------------
// Exhaustive lattice search over u_min + k * step.

inline constexpr double kGridBudget = 1e7;

inline OracleSolution solve_grid(const SystemModel& model, const Utility& utility, const Vec& x0,
                                 const RefTraj& r, int horizon, double grid_step) {
  require(model.input_dim() == 1, "solve_grid: only single-input models");
  require(horizon >= 1 && horizon <= 3 && horizon <= r.cols(), "solve_grid: need 1 <= N <= 3");
  require(grid_step > 0.0, "solve_grid: step must be positive");
  const auto t0 = std::chrono::steady_clock::now();
  const double lo = model.u_min()[0];
  const double range = model.u_max()[0] - lo;
  const auto points = static_cast<long long>(std::floor(range / grid_step + 1e-9)) + 1;
  if (std::pow(static_cast<double>(points), horizon) > kGridBudget)
    throw ContractViolation("solve_grid: lattice size exceeds budget of 1e7 points");

  std::vector<long long> idx(horizon, 0), best_idx(horizon, 0);
  double best = std::numeric_limits<double>::infinity();
  long long evaluated = 0;
  // Depth-first so prefix states are reused.
  std::function<void(int, const Vec&, double)> visit = [&](int depth, const Vec& x, double acc) {
    if (depth == horizon) {
      ++evaluated;
      if (acc < best) {
        best = acc;
        best_idx = idx;
      }
      return;
    }
    Vec u(1);
    for (long long k = 0; k < points; ++k) {
      u[0] = lo + static_cast<double>(k) * grid_step;
      Vec next;
      try {
        next = model.step(x, u);
      } catch (const NumericDomainError&) {
        continue;
      }
      idx[depth] = k;
      visit(depth + 1, next, acc + utility.evaluate(next, r.col(depth), u));
    }
  };
  visit(0, x0, 0.0);
  Mat controls(1, horizon);
  for (int i = 0; i < horizon; ++i) controls(0, i) = lo + static_cast<double>(best_idx[i]) * grid_step;
  SolverStats stats;
  stats.iterations = evaluated;
  stats.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return make_solution(model, utility, x0, r, std::move(controls), OracleStatus::optimal, stats);
}

// ---------------------------------------------------------------------------
// Principle-of-optimality check: the i-th control of the optimal N-step
// sequence must equal the first control of the optimal (N-i+1)-step problem
// started from the optimal trajectory's x_{i-1} with reference r_{i:N}.

struct BellmanReport {
  std::vector<double> discrepancy;  // per i = 1..N
  double max_discrepancy = 0.0;
  bool conclusive = true;
  bool passed = false;
  std::string note;
};

inline BellmanReport check_bellman_against(const OracleFn& oracle, const OracleSolution& full,
                                           const SystemModel& model, const Vec& x0, const RefTraj& r,
                                           int horizon, double tol) {
  BellmanReport rep;
  if (full.status != OracleStatus::optimal) {
    rep.conclusive = false;
    rep.note = "full problem status " + to_string(full.status);
  }
  Vec x = x0;
  for (int i = 1; i <= horizon; ++i) {
    const int sub_h = horizon - i + 1;
    const RefTraj tail = r.middleCols(i - 1, sub_h);
    const OracleSolution sub = oracle(x, tail, sub_h);
    if (sub.status != OracleStatus::optimal) {
      rep.conclusive = false;
      if (rep.note.empty()) rep.note = "sub-problem " + std::to_string(i) + " status " + to_string(sub.status);
    }
    const double d = (full.controls.col(i - 1) - sub.first_control()).cwiseAbs().maxCoeff();
    rep.discrepancy.push_back(d);
    rep.max_discrepancy = std::max(rep.max_discrepancy, d);
    x = model.step(x, full.controls.col(i - 1));
  }
  rep.passed = rep.conclusive && rep.max_discrepancy < tol;
  return rep;
}

inline BellmanReport check_bellman(const OracleFn& oracle, const SystemModel& model, const Vec& x0,
                                   const RefTraj& r, int horizon, double tol) {
  const OracleSolution full = oracle(x0, r, horizon);
  return check_bellman_against(oracle, full, model, x0, r, horizon, tol);
}

}  // namespace rmpc
