#pragma once

// Bellman-decomposed N-step cost in terms of the policy parameters:
//   V(x0, r_{1:N}, N; theta) = sum_{i=1}^{N} l(x_i, r_i, pi^{N-i+1}(x_{i-1}, r_{i:N}; theta))
// and its exact parameter gradient.

#include "rmpc/dynamics.hpp"
#include "rmpc/parallel.hpp"
#include "rmpc/policy.hpp"
#include "rmpc/utility.hpp"

#include <functional>
#include <limits>
#include <span>
#include <vector>

namespace rmpc {

struct MpcInstance {
  Vec x0;
  RefTraj r;  // ref_dim x len, len >= horizon
  int horizon = 1;

  void validate(int n, int p) const {
    require(x0.size() == n, "instance: state dimension mismatch");
    require(r.rows() == p, "instance: reference dimension mismatch");
    require(horizon >= 1 && horizon <= r.cols(), "instance: need 1 <= N <= len(r)");
    require(x0.allFinite() && r.allFinite(), "instance: non-finite values");
  }
};

struct RolloutResult {
  Mat states;    // n x (N+1), column 0 is x0
  Mat controls;  // m x N, column i-1 is u_{i-1}
  Vec utilities;  // l_1 .. l_N
  double cost = 0.0;
  std::vector<int> cycles_per_call;  // N, N-1, ..., 1
};

// Control source for step i (1-based): u_{i-1} from x_{i-1} and r_{i:N}.
using ControlFn = std::function<Vec(int i, const Vec& x, const RefTraj& r_tail)>;

inline RolloutResult rollout_with(const SystemModel& model, const Utility& utility,
                                  const MpcInstance& inst, const ControlFn& control) {
  inst.validate(model.state_dim(), utility.ref_dim());
  const int n = inst.horizon;
  RolloutResult res;
  res.states.resize(model.state_dim(), n + 1);
  res.controls.resize(model.input_dim(), n);
  res.utilities.resize(n);
  res.states.col(0) = inst.x0;
  for (int i = 1; i <= n; ++i) {
    const Vec x = res.states.col(i - 1);
    const RefTraj tail = inst.r.middleCols(i - 1, n - i + 1);
    const Vec u = control(i, x, tail);
    Vec next;
    try {
      next = model.step(x, u);
    } catch (const NumericDomainError& e) {
      throw DivergedRollout(std::string("rollout: ") + e.what(), i);
    }
    if (!model.in_envelope(next)) throw DivergedRollout("rollout: state left validity envelope", i);
    res.controls.col(i - 1) = u;
    res.states.col(i) = next;
    res.utilities[i - 1] = utility.evaluate(next, inst.r.col(i - 1), u);
    res.cycles_per_call.push_back(n - i + 1);
  }
  res.cost = res.utilities.sum();
  return res;
}

inline RolloutResult rollout_cost(const SystemModel& model, const Utility& utility,
                                  const RecurrentPolicy& policy, const MpcInstance& inst) {
  return rollout_with(model, utility, inst, [&](int, const Vec& x, const RefTraj& tail) {
    return policy.evaluate(x, tail, static_cast<int>(tail.cols()));
  });
}

// ---------------------------------------------------------------------------
// Batched reverse-mode gradient.

struct BatchGradient {
  Vec costs;                  // per instance, NaN when diverged
  std::vector<char> diverged;  // per instance
  Vec grad;                   // summed over non-diverged instances
  long long cycles = 0;       // recurrent cycles executed
  int active() const {
    int a = 0;
    for (char d : diverged) a += d ? 0 : 1;
    return a;
  }
};

// All instances must share the same horizon. Diverged instances are frozen
// at their last valid state and contribute nothing to the gradient.
inline BatchGradient rollout_grad_batch(const SystemModel& model, const Utility& utility,
                                        const RecurrentPolicy& policy,
                                        std::span<const MpcInstance> insts) {
  require(!insts.empty(), "rollout_grad_batch: empty batch");
  const int n = model.state_dim();
  const int m = model.input_dim();
  const int p = utility.ref_dim();
  const int horizon = insts.front().horizon;
  const auto batch = static_cast<Eigen::Index>(insts.size());
  require(policy.shape().state_dim == n && policy.shape().output_dim == m &&
              policy.shape().ref_dim == p,
          "rollout: policy dimensions do not match model/utility");
  for (const auto& inst : insts) {
    inst.validate(n, p);
    require(inst.horizon == horizon, "rollout_grad_batch: mixed horizons");
  }

  std::vector<Mat> refs(horizon, Mat(p, batch));
  for (Eigen::Index b = 0; b < batch; ++b)
    for (int j = 0; j < horizon; ++j) refs[j].col(b) = insts[b].r.col(j);

  std::vector<Mat> xs(horizon + 1, Mat(n, batch));
  std::vector<Mat> us(horizon, Mat(m, batch));
  std::vector<PolicyTrace> traces(horizon);
  for (Eigen::Index b = 0; b < batch; ++b) xs[0].col(b) = insts[b].x0;

  BatchGradient out;
  out.costs = Vec::Zero(batch);
  out.diverged.assign(batch, 0);
  out.grad = Vec::Zero(static_cast<Eigen::Index>(policy.param_count()));

  for (int i = 1; i <= horizon; ++i) {
    const int cycles = horizon - i + 1;
    auto outs = policy.forward_batch(xs[i - 1], std::span<const Mat>(refs).subspan(i - 1, cycles),
                                     cycles, &traces[i - 1]);
    out.cycles += static_cast<long long>(cycles) * batch;
    us[i - 1] = outs.back();
    for (Eigen::Index b = 0; b < batch; ++b) {
      if (out.diverged[b]) {
        xs[i].col(b) = xs[i - 1].col(b);
        continue;
      }
      const Vec x = xs[i - 1].col(b);
      const Vec u = us[i - 1].col(b);
      Vec next;
      bool ok = true;
      try {
        next = model.step(x, u);
      } catch (const NumericDomainError&) {
        ok = false;
      }
      if (ok && !model.in_envelope(next)) ok = false;
      if (!ok) {
        out.diverged[b] = 1;
        xs[i].col(b) = x;
        continue;
      }
      xs[i].col(b) = next;
      out.costs[b] += utility.evaluate(next, refs[i - 1].col(b), u);
    }
  }

  // G = dV/dx_i (total); D = dV/du_{i-1}.
  Mat g_state = Mat::Zero(n, batch);
  for (Eigen::Index b = 0; b < batch; ++b)
    if (!out.diverged[b])
      g_state.col(b) = utility.grad_x(xs[horizon].col(b), refs[horizon - 1].col(b), us[horizon - 1].col(b));

  for (int i = horizon; i >= 1; --i) {
    const int cycles = horizon - i + 1;
    Mat d_u = Mat::Zero(m, batch);
    Mat g_prev = Mat::Zero(n, batch);
    for (Eigen::Index b = 0; b < batch; ++b) {
      if (out.diverged[b]) continue;
      const Vec x_prev = xs[i - 1].col(b);
      const Vec u = us[i - 1].col(b);
      const Jacobians jac = model.jacobians(x_prev, u);
      const Vec gi = g_state.col(b);
      d_u.col(b) = utility.grad_u(xs[i].col(b), refs[i - 1].col(b), u) + jac.fu.transpose() * gi;
      g_prev.col(b) = jac.fx.transpose() * gi;
      if (i > 1) g_prev.col(b) += utility.grad_x(x_prev, refs[i - 2].col(b), us[i - 2].col(b));
    }
    std::vector<Mat> d(cycles);
    d.back() = std::move(d_u);
    const Mat dx = policy.backward_batch(traces[i - 1], d, out.grad);
    g_state = g_prev + dx;
    traces[i - 1] = {};
  }
  for (Eigen::Index b = 0; b < batch; ++b)
    if (out.diverged[b]) out.costs[b] = std::numeric_limits<double>::quiet_NaN();
  if (!out.grad.allFinite()) throw NumericDomainError("rollout_grad: non-finite parameter gradient");
  return out;
}

struct ValueAndGradient {
  double value = 0.0;
  Vec grad;
};

inline ValueAndGradient rollout_grad(const SystemModel& model, const Utility& utility,
                                     const RecurrentPolicy& policy, const MpcInstance& inst) {
  BatchGradient bg = rollout_grad_batch(model, utility, policy, std::span<const MpcInstance>(&inst, 1));
  if (bg.diverged[0]) {
    // Re-run unbatched to report the step index.
    rollout_cost(model, utility, policy, inst);
    throw DivergedRollout("rollout_grad: diverged", 0);
  }
  return {bg.costs[0], std::move(bg.grad)};
}

// The sensitivity recursion written out literally, forward in time:
//   psi_i = dpi/dx_{i-1} phi_{i-1} + dpi/dtheta
//   phi_i = df/dx phi_{i-1} + df/du psi_i,  phi_0 = 0
//   dV/dtheta = sum_i dl_i/dx_i phi_i + dl_i/du psi_i
// phi_i is n x |theta|, so this is only practical for small policies.
inline ValueAndGradient rollout_grad_forward_mode(const SystemModel& model, const Utility& utility,
                                                  const RecurrentPolicy& policy,
                                                  const MpcInstance& inst) {
  inst.validate(model.state_dim(), utility.ref_dim());
  const int n = model.state_dim();
  const auto np = static_cast<Eigen::Index>(policy.param_count());
  const int horizon = inst.horizon;
  Mat phi = Mat::Zero(n, np);
  Vec x = inst.x0;
  ValueAndGradient out{0.0, Vec::Zero(np)};
  for (int i = 1; i <= horizon; ++i) {
    const int cycles = horizon - i + 1;
    const RefTraj tail = inst.r.middleCols(i - 1, cycles);
    const Vec u = policy.evaluate(x, tail, cycles);
    const Mat jpi = policy.jacobians_forward_mode(x, tail, cycles).back();
    const Mat psi = jpi.rightCols(n) * phi + jpi.leftCols(np);
    const Jacobians jac = model.jacobians(x, u);
    phi = jac.fx * phi + jac.fu * psi;
    x = model.step(x, u);
    if (!model.in_envelope(x)) throw DivergedRollout("forward-mode rollout: left envelope", i);
    const Vec r_i = inst.r.col(i - 1);
    out.value += utility.evaluate(x, r_i, u);
    out.grad += (utility.grad_x(x, r_i, u).transpose() * phi).transpose();
    out.grad += (utility.grad_u(x, r_i, u).transpose() * psi).transpose();
  }
  return out;
}

// ---------------------------------------------------------------------------

class BatchFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ObjectiveResult {
  double value = 0.0;  // mean cost over non-diverged instances
  Vec grad;            // mean gradient
  int excluded = 0;
  long long cycles = 0;
};

// Fixed chunk size so the reduction order does not depend on worker count.
inline constexpr std::size_t kObjectiveChunk = 32;

inline ObjectiveResult objective_batch(const SystemModel& model, const Utility& utility,
                                       const RecurrentPolicy& policy,
                                       std::span<const MpcInstance> batch, int workers = 1) {
  require(!batch.empty(), "objective_batch: empty batch");
  const std::size_t chunks = (batch.size() + kObjectiveChunk - 1) / kObjectiveChunk;
  std::vector<BatchGradient> parts(chunks);
  parallel_for(chunks, workers, [&](std::size_t c) {
    const std::size_t lo = c * kObjectiveChunk;
    const std::size_t len = std::min(kObjectiveChunk, batch.size() - lo);
    parts[c] = rollout_grad_batch(model, utility, policy, batch.subspan(lo, len));
  });
  ObjectiveResult res;
  res.grad = Vec::Zero(static_cast<Eigen::Index>(policy.param_count()));
  int active = 0;
  for (const auto& part : parts) {
    for (Eigen::Index b = 0; b < part.costs.size(); ++b)
      if (!part.diverged[b]) res.value += part.costs[b];
    res.grad += part.grad;
    active += part.active();
    res.cycles += part.cycles;
  }
  res.excluded = static_cast<int>(batch.size()) - active;
  if (2 * res.excluded > static_cast<int>(batch.size()))
    throw BatchFailure("objective_batch: more than half of the batch diverged (" +
                       std::to_string(res.excluded) + "/" + std::to_string(batch.size()) + ")");
  res.value /= active;
  res.grad /= active;
  return res;
}

}  // namespace rmpc
