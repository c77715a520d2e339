#pragma once

// Budget-aware inference: run cycles until the budget is spent and return
// the deepest cycle that finished in time.
//
// With per-cycle costs t_c and budget T the returned depth is
//   k = N_max                       if sum_{c<=N_max} t_c <= T
//   k = p   with sum_{c<=p} t_c <= T < sum_{c<=p+1} t_c
// and k = 1 when even the first cycle overruns.

#include "rmpc/policy.hpp"

#include <chrono>
#include <vector>

namespace rmpc {

// Monotonic wall clock.
struct SteadyClock {
  using time_point = std::chrono::steady_clock::time_point;
  time_point now() const { return std::chrono::steady_clock::now(); }
  void cycle_done(int) {}
};

// Deterministic clock advanced by a per-cycle cost model, in milliseconds.
class SimulatedClock {
 public:
  using time_point = double;

  explicit SimulatedClock(std::vector<double> cycle_costs_ms, double start_ms = 0.0)
      : costs_(std::move(cycle_costs_ms)), t_(start_ms) {
    require(!costs_.empty(), "SimulatedClock: needs at least one cycle cost");
  }
  static SimulatedClock constant(double cost_ms, double start_ms = 0.0) {
    return SimulatedClock({cost_ms}, start_ms);
  }

  time_point now() const { return t_; }
  // Cycle c (1-based) finished; costs beyond the list repeat the last entry.
  void cycle_done(int c) {
    const std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(c - 1), costs_.size() - 1);
    t_ += costs_[i];
  }

 private:
  std::vector<double> costs_;
  double t_;
};

struct AnytimeResult {
  Vec u;
  int k = 0;
};

// r must hold N_max reference columns (see pad_reference).
template <class Clock>
AnytimeResult anytime_infer(const RecurrentPolicy& policy, const Vec& x0, const RefTraj& r,
                            typename Clock::time_point deadline, Clock& clock) {
  const PolicyShape& s = policy.shape();
  require(x0.size() == s.state_dim && r.rows() == s.ref_dim && r.cols() >= 1,
          "anytime_infer: input dimension mismatch");
  const int n_max = static_cast<int>(r.cols());
  std::vector<Mat> h(s.layers, Mat::Zero(s.hidden, 1));
  Mat input(s.input_dim(), 1);
  input.topRows(s.state_dim) = x0;
  AnytimeResult best;
  for (int c = 1; c <= n_max; ++c) {
    input.bottomRows(s.ref_dim) = r.col(c - 1);
    Vec y = policy.cycle_batch(input, h).col(0);
    clock.cycle_done(c);
    if (clock.now() <= deadline || c == 1) {
      best.u = std::move(y);
      best.k = c;
    }
    if (clock.now() > deadline) break;
  }
  return best;
}

// The depth formula evaluated directly on known cycle costs.
inline int anytime_depth(const std::vector<double>& cycle_costs, double budget, int n_max) {
  double sum = 0.0;
  int k = 0;
  for (int c = 1; c <= n_max; ++c) {
    const std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(c - 1), cycle_costs.size() - 1);
    sum += cycle_costs[i];
    if (sum <= budget)
      k = c;
    else
      break;
  }
  return std::max(k, 1);
}

}  // namespace rmpc
