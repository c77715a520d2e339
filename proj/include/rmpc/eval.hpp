#pragma once

// Evaluation protocol: policy error against an oracle, closed-loop
// cost-to-go, anytime-budget experiments, plant-parameter sweeps and
// inference-time profiles.

#include "rmpc/anytime.hpp"
#include "rmpc/oracle.hpp"
#include "rmpc/parallel.hpp"
#include "rmpc/rollout.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

namespace rmpc {

class EvalRefused : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Statistic {
  double mean = 0.0;
  double ci95 = 0.0;  // half-width of the normal-approximation interval
  int count = 0;
};

inline Statistic summarize(const std::vector<double>& xs) {
  Statistic s;
  s.count = static_cast<int>(xs.size());
  if (xs.empty()) return s;
  double sum = 0.0;
  for (double x : xs) sum += x;
  s.mean = sum / s.count;
  if (s.count > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.ci95 = 1.96 * std::sqrt(ss / (s.count - 1)) / std::sqrt(static_cast<double>(s.count));
  }
  return s;
}

// ---------------------------------------------------------------------------
// e_N = mean_i |u*_0(x0_i, r_{1:N}) - pi^N(x0_i, r_{1:N})| / (u*_max - u*_min)
// with the extrema taken over every instance and every evaluated N.

struct PolicyErrorRow {
  int horizon = 0;
  Statistic error;
  int excluded = 0;  // oracle solves that were not optimal
};

struct PolicyErrorTable {
  std::vector<PolicyErrorRow> rows;
  double u_star_min = 0.0;
  double u_star_max = 0.0;
};

// Oracle first controls, [instance][horizon index]; NaN marks non-optimal.
using OracleFirstControls = std::vector<std::vector<Vec>>;

inline OracleFirstControls solve_first_controls(const OracleFn& oracle,
                                                const std::vector<MpcInstance>& eval_set,
                                                const std::vector<int>& horizons, int workers = 1) {
  OracleFirstControls out(eval_set.size(), std::vector<Vec>(horizons.size()));
  parallel_for(eval_set.size(), workers, [&](std::size_t i) {
    for (std::size_t h = 0; h < horizons.size(); ++h) {
      const OracleSolution sol = oracle(eval_set[i].x0, eval_set[i].r, horizons[h]);
      out[i][h] = sol.status == OracleStatus::optimal
                      ? sol.first_control()
                      : Vec::Constant(sol.controls.rows(), std::numeric_limits<double>::quiet_NaN());
    }
  });
  return out;
}

inline PolicyErrorTable policy_error_from(const RecurrentPolicy& policy,
                                          const std::vector<MpcInstance>& eval_set,
                                          const std::vector<int>& horizons,
                                          const OracleFirstControls& u_star) {
  require(!eval_set.empty() && !horizons.empty(), "policy_error: empty evaluation set");
  const int m = policy.shape().output_dim;
  Vec lo = Vec::Constant(m, std::numeric_limits<double>::infinity());
  Vec hi = Vec::Constant(m, -std::numeric_limits<double>::infinity());
  for (const auto& per : u_star)
    for (const Vec& u : per)
      if (u.allFinite()) {
        lo = lo.cwiseMin(u);
        hi = hi.cwiseMax(u);
      }
  const Vec span = hi - lo;
  if (!span.allFinite() || span.minCoeff() < 1e-9)
    throw EvalRefused("policy_error: degenerate normalization (oracle first-control range < 1e-9)");

  const int n_max = *std::max_element(horizons.begin(), horizons.end());
  PolicyErrorTable table;
  table.u_star_min = lo[0];
  table.u_star_max = hi[0];
  std::vector<std::vector<double>> errs(horizons.size());
  std::vector<int> excluded(horizons.size(), 0);
  for (std::size_t i = 0; i < eval_set.size(); ++i) {
    const auto out = policy.forward(eval_set[i].x0, eval_set[i].r, n_max).outputs;
    for (std::size_t h = 0; h < horizons.size(); ++h) {
      const Vec& us = u_star[i][h];
      if (!us.allFinite()) {
        ++excluded[h];
        continue;
      }
      const Vec diff = (out[horizons[h] - 1] - us).cwiseAbs().cwiseQuotient(span);
      errs[h].push_back(diff.mean());
    }
  }
  for (std::size_t h = 0; h < horizons.size(); ++h)
    table.rows.push_back({horizons[h], summarize(errs[h]), excluded[h]});
  return table;
}

inline PolicyErrorTable policy_error(const RecurrentPolicy& policy, const OracleFn& oracle,
                                     const std::vector<MpcInstance>& eval_set,
                                     const std::vector<int>& horizons, int workers = 1) {
  return policy_error_from(policy, eval_set, horizons,
                           solve_first_controls(oracle, eval_set, horizons, workers));
}

// ---------------------------------------------------------------------------
// Closed loop: at step t the controller sees r_{t+1 : t+window}.

using Controller = std::function<Vec(const Vec& x, const RefTraj& window)>;

struct ClosedLoopResult {
  double cost = 0.0;  // L, +inf when diverged
  bool diverged = false;
  int diverged_step = -1;
  double mean_abs_tracking_error = 0.0;  // |x[0] - r| averaged over completed steps
  Mat states;                            // n x (steps_done + 1)
  Mat controls;                          // m x steps_done
  std::vector<int> depths;               // cycles used per step (anytime runs)
};

inline ClosedLoopResult cost_to_go(const SystemModel& model, const Utility& utility,
                                   const Controller& controller, const Vec& x0, const RefTraj& r_stream,
                                   int steps, int window) {
  require(steps >= 0 && window >= 1, "cost_to_go: invalid steps/window");
  require(r_stream.cols() >= steps + window, "cost_to_go: reference stream shorter than steps + window");
  ClosedLoopResult res;
  res.states.resize(model.state_dim(), steps + 1);
  res.controls.resize(model.input_dim(), steps);
  res.states.col(0) = x0;
  Vec x = x0;
  double track = 0.0;
  int done = 0;
  for (int t = 0; t < steps; ++t) {
    const Vec u = controller(x, r_stream.middleCols(t, window));
    Vec next;
    bool ok = true;
    try {
      next = model.step(x, u);
    } catch (const NumericDomainError&) {
      ok = false;
    }
    if (!ok || !model.in_envelope(next)) {
      res.diverged = true;
      res.diverged_step = t + 1;
      res.cost = std::numeric_limits<double>::infinity();
      break;
    }
    res.cost += utility.evaluate(next, r_stream.col(t), u);
    track += std::abs(next[0] - r_stream(0, t));
    res.controls.col(t) = u;
    res.states.col(t + 1) = next;
    x = next;
    ++done;
  }
  res.states.conservativeResize(Eigen::NoChange, done + 1);
  res.controls.conservativeResize(Eigen::NoChange, done);
  res.mean_abs_tracking_error = done > 0 ? track / done : 0.0;
  return res;
}

inline Controller policy_controller(const RecurrentPolicy& policy, int cycles) {
  return [&policy, cycles](const Vec& x, const RefTraj& window) {
    return policy.evaluate(x, window, cycles);
  };
}

inline Controller oracle_controller(OracleFn oracle, int horizon) {
  return [oracle = std::move(oracle), horizon](const Vec& x, const RefTraj& window) {
    return oracle(x, window, horizon).first_control();
  };
}

// ---------------------------------------------------------------------------
// Anytime experiment under a simulated deterministic clock.

struct ClosedLoopStart {
  Vec x0;
  RefTraj r_stream;
};

struct AnytimeRow {
  double budget_ms = 0.0;
  Statistic depth;
  int depth_min = 0;
  int depth_max = 0;
  Statistic cost;
  int diverged = 0;
};

inline std::vector<AnytimeRow> anytime_experiment(const RecurrentPolicy& policy, const SystemModel& model,
                                                  const Utility& utility,
                                                  const std::vector<double>& budgets_ms,
                                                  const std::vector<double>& cycle_costs_ms,
                                                  const std::vector<ClosedLoopStart>& starts, int steps,
                                                  int n_max, int workers = 1) {
  require(std::is_sorted(budgets_ms.begin(), budgets_ms.end()), "anytime_experiment: budgets must be ascending");
  std::vector<AnytimeRow> rows(budgets_ms.size());
  for (std::size_t bi = 0; bi < budgets_ms.size(); ++bi) {
    const double budget = budgets_ms[bi];
    std::vector<ClosedLoopResult> runs(starts.size());
    parallel_for(starts.size(), workers, [&](std::size_t s) {
      std::vector<int> depths;
      Controller ctl = [&](const Vec& x, const RefTraj& window) {
        SimulatedClock clock(cycle_costs_ms);
        const AnytimeResult ar = anytime_infer(policy, x, window, budget, clock);
        depths.push_back(ar.k);
        return ar.u;
      };
      runs[s] = cost_to_go(model, utility, ctl, starts[s].x0, starts[s].r_stream, steps, n_max);
      runs[s].depths = std::move(depths);
    });
    AnytimeRow row;
    row.budget_ms = budget;
    std::vector<double> ks, costs;
    row.depth_min = n_max;
    for (const auto& run : runs) {
      for (int k : run.depths) {
        ks.push_back(k);
        row.depth_min = std::min(row.depth_min, k);
        row.depth_max = std::max(row.depth_max, k);
      }
      if (run.diverged)
        ++row.diverged;
      else
        costs.push_back(run.cost);
    }
    row.depth = summarize(ks);
    row.cost = summarize(costs);
    rows[bi] = row;
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Fixed policy, swept plant parameters.

using ModelFactory = std::function<ModelPtr(const std::map<std::string, double>& overrides)>;
using ScenarioFn = std::function<ClosedLoopStart(const SystemModel& model)>;

struct SweepRow {
  std::string parameter;
  double value = 0.0;
  bool nominal = false;
  double tracking_error = 0.0;  // mean |y - r|, NaN when diverged
  double cost = 0.0;
  bool diverged = false;
};

inline std::vector<SweepRow> robustness_sweep(const RecurrentPolicy& policy, int cycles,
                                              const ModelFactory& factory, const Utility& utility,
                                              const std::map<std::string, double>& nominal,
                                              const std::map<std::string, std::vector<double>>& sweep,
                                              const ScenarioFn& scenario, int steps, int window,
                                              int workers = 1) {
  struct Job {
    std::string param;
    double value;
  };
  std::vector<Job> jobs;
  for (const auto& [param, values] : sweep)  // std::map: ordered by parameter name
    for (double v : values) jobs.push_back({param, v});
  std::vector<SweepRow> rows(jobs.size());
  parallel_for(jobs.size(), workers, [&](std::size_t j) {
    auto overrides = nominal;
    overrides[jobs[j].param] = jobs[j].value;
    const ModelPtr model = factory(overrides);
    const ClosedLoopStart start = scenario(*model);
    const ClosedLoopResult res =
        cost_to_go(*model, utility, policy_controller(policy, cycles), start.x0, start.r_stream, steps, window);
    SweepRow row;
    row.parameter = jobs[j].param;
    row.value = jobs[j].value;
    auto it = nominal.find(jobs[j].param);
    row.nominal = it != nominal.end() && it->second == jobs[j].value;
    row.diverged = res.diverged;
    row.cost = res.cost;
    row.tracking_error = res.diverged ? std::numeric_limits<double>::quiet_NaN() : res.mean_abs_tracking_error;
    rows[j] = row;
  });
  return rows;
}

// ---------------------------------------------------------------------------
// Inference-time profile. Medians over repeated samples; each sample loops
// enough times to stay well above the clock resolution.

struct TimingRow {
  int horizon = 0;
  double policy_ms = 0.0;
  double oracle_ms = std::numeric_limits<double>::quiet_NaN();
};

struct TimingProfile {
  std::vector<TimingRow> rows;
  double policy_fit_slope = 0.0;
  double policy_fit_intercept = 0.0;
  double policy_fit_r2 = 0.0;
};

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

inline LinearFit fit_line(const std::vector<double>& xs, const std::vector<double>& ys) {
  require(xs.size() == ys.size() && xs.size() >= 2, "fit_line: need two or more points");
  const double n = static_cast<double>(xs.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
  }
  LinearFit f;
  f.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  f.intercept = (sy - f.slope * sx) / n;
  double ss_res = 0, ss_tot = 0;
  const double mean_y = sy / n;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double pred = f.intercept + f.slope * xs[i];
    ss_res += (ys[i] - pred) * (ys[i] - pred);
    ss_tot += (ys[i] - mean_y) * (ys[i] - mean_y);
  }
  f.r2 = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0;
  return f;
}

// Median milliseconds per call of fn.
template <class Fn>
double median_time_ms(Fn&& fn, int samples = 15, double min_sample_ms = 0.2) {
  fn();  // warm-up
  int inner = 1;
  for (;;) {
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < inner; ++i) fn();
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    if (ms >= min_sample_ms || inner >= (1 << 20)) break;
    inner *= 2;
  }
  std::vector<double> times;
  for (int s = 0; s < samples; ++s) {
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < inner; ++i) fn();
    times.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count() / inner);
  }
  std::nth_element(times.begin(), times.begin() + times.size() / 2, times.end());
  return times[times.size() / 2];
}

inline TimingProfile timing_profile(const RecurrentPolicy& policy, const OracleFn* oracle,
                                    const std::vector<int>& horizons, const Vec& x0, const RefTraj& r,
                                    int samples = 15) {
  TimingProfile prof;
  std::vector<double> xs, ys;
  for (int h : horizons) {
    TimingRow row;
    row.horizon = h;
    volatile double sink = 0.0;
    row.policy_ms = median_time_ms([&] { sink = sink + policy.evaluate(x0, r, h)[0]; }, samples);
    if (oracle)
      row.oracle_ms = median_time_ms([&] { sink = sink + (*oracle)(x0, r, h).value; }, std::max(3, samples / 5), 0.0);
    prof.rows.push_back(row);
    xs.push_back(h);
    ys.push_back(row.policy_ms);
  }
  if (xs.size() >= 2) {
    const LinearFit f = fit_line(xs, ys);
    prof.policy_fit_slope = f.slope;
    prof.policy_fit_intercept = f.intercept;
    prof.policy_fit_r2 = f.r2;
  }
  return prof;
}

}  // namespace rmpc
