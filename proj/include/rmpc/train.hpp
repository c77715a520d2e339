#pragma once

// Offline policy learning: sample (x0, r_{1:N_max}), take a gradient step on
// the batch-mean Bellman-decomposed cost, repeat until the smoothed cost stops
// changing or the iteration budget runs out.

#include "rmpc/optimizer.hpp"
#include "rmpc/rollout.hpp"
#include "rmpc/sampler.hpp"

#include <chrono>
#include <functional>
#include <string>
#include <vector>

namespace rmpc {

enum class OptimizerKind { gd, adam };

inline std::string to_string(OptimizerKind k) { return k == OptimizerKind::gd ? "gd" : "adam"; }

inline OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "gd") return OptimizerKind::gd;
  if (s == "adam") return OptimizerKind::adam;
  throw ConfigError("unknown optimizer '" + s + "'");
}

struct TrainingConfig {
  int horizon = 15;  // N_max
  double learning_rate = 2e-4;
  int batch_size = 256;
  OptimizerKind optimizer = OptimizerKind::adam;
  double epsilon = 1e-4;  // on the smoothed cost; <= 0 disables the test
  long long max_iterations = 10000;
  std::uint64_t seed = 1;
  long long eval_every = 1000;
  double clip_norm = 10.0;  // <= 0 disables clipping
  int ema_window = 100;
  int workers = 1;
  int max_consecutive_failures = 10;

  void validate() const {
    require(learning_rate > 0.0, "training: learning_rate must be positive");
    require(batch_size >= 1, "training: batch_size must be >= 1");
    require(horizon >= 1, "training: horizon must be >= 1");
    require(max_iterations >= 0, "training: max_iterations must be >= 0");
    require(ema_window >= 1, "training: ema_window must be >= 1");
  }
};

struct IterationRecord {
  long long iteration = 0;
  double cost = 0.0;      // batch-mean J
  double smoothed = 0.0;  // exponential moving average of J
  double grad_norm = 0.0;  // before clipping
  bool clipped = false;
  int excluded = 0;
  long long cycles = 0;
  bool skipped = false;  // step rejected (failed batch or non-finite gradient)
};

struct EvalSnapshot {
  long long iteration = 0;
  std::vector<double> policy_error;  // e_N, N = 1..N_max
};

struct TrainingHistory {
  std::vector<IterationRecord> records;
  std::vector<EvalSnapshot> snapshots;
  long long iterations = 0;
  bool converged = false;
  std::string stop_reason;
  double wall_ms = 0.0;
};

struct TrainingHooks {
  std::function<void(const IterationRecord&)> on_iteration;
  // Called every eval_every iterations and once at the end (final = true).
  std::function<void(long long iteration, const RecurrentPolicy&, bool final)> on_checkpoint;
  // Optional e_N evaluation recorded at checkpoints.
  std::function<std::vector<double>(const RecurrentPolicy&)> evaluate;
};

class TrainingAborted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline TrainingHistory train(const TrainingConfig& cfg, SamplerSpec sampler, const SystemModel& model,
                             const Utility& utility, RecurrentPolicy& policy,
                             const TrainingHooks& hooks = {}) {
  cfg.validate();
  sampler.horizon = cfg.horizon;
  sampler.validate();
  const auto t0 = std::chrono::steady_clock::now();
  TrainingHistory history;
  Rng rng = Rng::derive(cfg.seed, "sampler");
  AdamState adam(static_cast<Eigen::Index>(policy.param_count()));
  const double ema_alpha = 1.0 / cfg.ema_window;
  double ema = 0.0;
  int failures = 0;

  auto checkpoint = [&](long long it, bool final) {
    if (hooks.evaluate) history.snapshots.push_back({it, hooks.evaluate(policy)});
    if (hooks.on_checkpoint) hooks.on_checkpoint(it, policy, final);
  };

  history.stop_reason = "max-iterations";
  for (long long it = 1; it <= cfg.max_iterations; ++it) {
    const auto batch = sample_batch(sampler, rng, cfg.batch_size);
    IterationRecord rec;
    rec.iteration = it;
    ObjectiveResult obj;
    bool ok = true;
    try {
      obj = objective_batch(model, utility, policy, batch, cfg.workers);
    } catch (const BatchFailure&) {
      ok = false;
    } catch (const NumericDomainError&) {
      ok = false;
    }
    if (ok) {
      rec.cost = obj.value;
      rec.excluded = obj.excluded;
      rec.cycles = obj.cycles;
      rec.grad_norm = obj.grad.norm();
      rec.clipped = clip_global_norm(obj.grad, cfg.clip_norm);
      ok = cfg.optimizer == OptimizerKind::gd ? gd_step(policy.params(), obj.grad, cfg.learning_rate)
                                              : adam_step(adam, policy.params(), obj.grad, cfg.learning_rate);
    }
    double previous_ema = ema;
    if (ok) {
      failures = 0;
      ema = it == 1 ? obj.value : (1.0 - ema_alpha) * ema + ema_alpha * obj.value;
    } else {
      rec.skipped = true;
      if (++failures > cfg.max_consecutive_failures)
        throw TrainingAborted("training aborted: " + std::to_string(failures) +
                              " consecutive failed batches at iteration " + std::to_string(it));
    }
    rec.smoothed = ema;
    history.records.push_back(rec);
    history.iterations = it;
    if (hooks.on_iteration) hooks.on_iteration(rec);

    const bool converged = ok && cfg.epsilon > 0.0 && it > cfg.ema_window &&
                           std::abs(ema - previous_ema) <= cfg.epsilon;
    if (converged) {
      history.converged = true;
      history.stop_reason = "converged";
      break;
    }
    if (cfg.eval_every > 0 && it % cfg.eval_every == 0 && it != cfg.max_iterations) checkpoint(it, false);
  }
  checkpoint(history.iterations, true);
  history.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return history;
}

}  // namespace rmpc
