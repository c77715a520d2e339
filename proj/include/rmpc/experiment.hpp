#pragma once

// Config-driven experiment runs: training with logs and checkpoints,
// evaluation reports, closed-loop traces and report consolidation. Every
// file written here except *_timing.* is a pure function of
// (config, seed, checkpoint), so reruns with one worker are byte-identical.

#include "rmpc/checkpoint.hpp"
#include "rmpc/config.hpp"
#include "rmpc/eval.hpp"
#include "rmpc/oracle_cache.hpp"
#include "rmpc/report.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>

#ifndef RMPC_VERSION
#define RMPC_VERSION "0.1.0"
#endif

namespace rmpc {

namespace fs = std::filesystem;

struct Experiment {
  ExperimentConfig cfg;
  ModelPtr model;
  std::shared_ptr<QuadraticTrackingUtility> utility;
  PolicyShape shape;
  SamplerSpec sampler;

  static Experiment from_config(ExperimentConfig cfg) {
    Experiment e;
    e.model = build_model(cfg);
    e.utility = build_utility(cfg, *e.model);
    e.shape = build_policy_shape(cfg, *e.model);
    e.sampler = build_sampler(cfg, *e.model);
    e.cfg = std::move(cfg);
    return e;
  }

  int n_max() const { return cfg.training.horizon; }

  RecurrentPolicy initial_policy() const {
    RecurrentPolicy p(shape);
    p.init_params(cfg.training.seed);
    return p;
  }

  // Oracle for this experiment; cached on disk when a cache is given.
  OracleFn oracle(int workers = 1, OracleCache* cache = nullptr) const {
    OracleFn raw = build_oracle(cfg, model, utility, workers);
    if (!cache) return raw;
    return with_cache(*cache, oracle_tag(cfg, *model), model, utility, std::move(raw));
  }

  std::vector<MpcInstance> eval_set() const {
    Rng rng = Rng::derive(cfg.eval.seed, "eval-instances");
    return sample_batch(sampler, rng, cfg.eval.instances);
  }

  // Closed-loop starts: long references from the training family.
  std::vector<ClosedLoopStart> closed_loop_starts() const {
    Rng rng = Rng::derive(cfg.eval.seed, "closed-loop-starts");
    std::vector<ClosedLoopStart> out;
    const int length = cfg.eval.steps + n_max();
    for (int i = 0; i < cfg.eval.closed_loop_starts; ++i) {
      ClosedLoopStart s;
      s.r_stream = sample_reference(sampler, rng, length);
      s.x0 = sample_state(sampler, rng, s.r_stream);
      out.push_back(std::move(s));
    }
    return out;
  }

  // Fixed scenario used by simulate and the robustness sweep.
  ClosedLoopStart scenario(const SystemModel& m) const {
    ClosedLoopStart s;
    const auto& e = cfg.eval;
    s.x0 = e.scenario_x0.empty() ? Vec::Zero(m.state_dim())
                                 : Eigen::Map<const Vec>(e.scenario_x0.data(), e.scenario_x0.size()).eval();
    if (s.x0.size() != m.state_dim()) throw ConfigError("eval.scenario_x0 must have one entry per state");
    s.r_stream = sine_reference(e.scenario_amplitude, e.scenario_wavelength, reference_step_length(cfg, m),
                                e.scenario_phase, e.steps + n_max());
    return s;
  }
};

inline std::string num_json(double v) { return nlohmann::json(v).dump(); }

// ---------------------------------------------------------------------------
// Training.

struct TrainRunOptions {
  int workers = 1;
  std::optional<long long> max_iterations;
  bool eval_checkpoints = true;  // e_N at each checkpoint (oracle solves are shared)
  std::ostream* progress = nullptr;
  OracleCache* cache = nullptr;
};

inline KeyValues manifest_for(const Experiment& e, const std::string& command) {
  KeyValues kv;
  kv["code_version"] = RMPC_VERSION;
  kv["command"] = command;
  kv["config_hash"] = hex64(config_hash(e.cfg));
  kv["seed"] = std::to_string(e.cfg.training.seed);
  kv["eval_seed"] = std::to_string(e.cfg.eval.seed);
  kv["model"] = model_key(*e.model);
  kv["architecture"] = architecture_descriptor(e.shape);
  kv["config_file"] = "config.toml";
  return kv;
}

// Refuses to reuse an output directory whose manifest records a different config.
inline void check_manifest(const fs::path& dir, const KeyValues& manifest) {
  const fs::path path = dir / "manifest.txt";
  if (!fs::exists(path)) return;
  const KeyValues old = read_kv(path);
  auto it = old.find("config_hash");
  if (it != old.end() && it->second != manifest.at("config_hash"))
    throw ConfigError("output directory " + dir.string() + " holds a run with config hash " + it->second +
                      ", this config hashes to " + manifest.at("config_hash"));
}

inline TrainingHistory run_training(const Experiment& e, const fs::path& out, const TrainRunOptions& opt) {
  TrainingConfig tc = e.cfg.training;
  tc.workers = opt.workers;
  if (opt.max_iterations) tc.max_iterations = *opt.max_iterations;

  fs::create_directories(out / "checkpoints");
  KeyValues manifest = manifest_for(e, "train");
  manifest["max_iterations"] = std::to_string(tc.max_iterations);
  check_manifest(out, manifest);
  save_config(out / "config.toml", e.cfg);
  write_text_file(out / "manifest.txt", kv_text(manifest));

  std::ofstream log(out / "train_log.ndjson", std::ios::binary | std::ios::trunc);
  std::ofstream timing(out / "train_timing.ndjson", std::ios::binary | std::ios::trunc);
  const auto t0 = std::chrono::steady_clock::now();

  RecurrentPolicy policy = e.initial_policy();
  const auto horizons = horizon_list(e.cfg.eval.horizons, e.n_max());
  const auto eval_set = e.eval_set();
  std::optional<OracleFirstControls> u_star;
  const OracleFn oracle = e.oracle(opt.workers, opt.cache);

  Table snapshots{"train_eval", {"iteration"}, {}};
  for (int h : horizons) snapshots.header.push_back("e_" + std::to_string(h));

  TrainingHooks hooks;
  hooks.on_iteration = [&](const IterationRecord& r) {
    nlohmann::ordered_json j;
    j["iteration"] = r.iteration;
    j["cost"] = r.cost;
    j["smoothed"] = r.smoothed;
    j["grad_norm"] = r.grad_norm;
    j["clip_active"] = r.clipped;
    j["excluded"] = r.excluded;
    j["cycles"] = r.cycles;
    j["skipped"] = r.skipped;
    log << j.dump() << '\n';
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    timing << "{\"iteration\":" << r.iteration << ",\"wall_ms\":" << num_json(ms) << "}\n";
    if (opt.progress && (r.iteration % 100 == 0 || r.iteration == 1))
      *opt.progress << "iter " << r.iteration << " J=" << r.cost << " smoothed=" << r.smoothed << "\n";
  };
  if (opt.eval_checkpoints && !eval_set.empty()) {
    hooks.evaluate = [&](const RecurrentPolicy& p) {
      if (!u_star) u_star = solve_first_controls(oracle, eval_set, horizons, opt.workers);
      std::vector<double> errs;
      try {
        for (const auto& row : policy_error_from(p, eval_set, horizons, *u_star).rows) errs.push_back(row.error.mean);
      } catch (const EvalRefused&) {
        errs.assign(horizons.size(), std::numeric_limits<double>::quiet_NaN());
      }
      return errs;
    };
  }
  hooks.on_checkpoint = [&](long long it, const RecurrentPolicy& p, bool final) {
    CheckpointMeta meta{{"config_hash", manifest["config_hash"]},
                        {"iteration", std::to_string(it)},
                        {"seed", std::to_string(tc.seed)}};
    char name[64];
    std::snprintf(name, sizeof name, "ckpt-%08lld.rmpc", it);
    save_checkpoint(out / "checkpoints" / name, p, meta);
    if (final) save_checkpoint(out / "policy.rmpc", p, meta);
  };

  TrainingHistory hist;
  try {
    hist = train(tc, e.sampler, *e.model, *e.utility, policy, hooks);
  } catch (...) {
    log.flush();
    throw;
  }
  for (const auto& s : hist.snapshots) {
    std::vector<std::string> row{cell(s.iteration)};
    for (double v : s.policy_error) row.push_back(cell(v));
    snapshots.add(row);
  }
  write_csv(out, snapshots);
  KeyValues summary{{"iterations", std::to_string(hist.iterations)},
                    {"converged", hist.converged ? "1" : "0"},
                    {"stop_reason", hist.stop_reason},
                    {"final_smoothed_cost", hist.records.empty() ? "nan" : cell(hist.records.back().smoothed)}};
  write_text_file(out / "train_summary.txt", kv_text(summary));
  write_text_file(out / "train_timing_summary.txt", "wall_ms=" + cell(hist.wall_ms) + "\n");
  return hist;
}

// ---------------------------------------------------------------------------
// Evaluation reports.

inline const std::vector<std::string>& all_reports() {
  static const std::vector<std::string> r{"error", "cost", "anytime", "sweep", "timing", "bellman"};
  return r;
}

struct EvalRunOptions {
  std::set<std::string> reports{"error", "cost", "anytime", "sweep"};
  int workers = 1;
  OracleCache* cache = nullptr;
  std::ostream* out = nullptr;  // summary printout
};

struct EvalReport {
  std::vector<Table> tables;
  KeyValues summary;
};

inline Table policy_error_table(const PolicyErrorTable& t) {
  Table tab{"policy_error", {"N", "e_N", "ci95", "count", "excluded"}, {}};
  for (const auto& r : t.rows)
    tab.add({cell(r.horizon), cell(r.error.mean), cell(r.error.ci95), cell(r.error.count), cell(r.excluded)});
  return tab;
}

inline EvalReport run_eval(const Experiment& e, const RecurrentPolicy& policy, const fs::path& out_dir,
                           const EvalRunOptions& opt) {
  require_architecture(policy, e.shape);
  EvalReport rep;
  const OracleFn oracle = e.oracle(opt.workers, opt.cache);
  const int n_max = e.n_max();
  auto& kv = rep.summary;
  kv["config_hash"] = hex64(config_hash(e.cfg));
  kv["eval_seed"] = std::to_string(e.cfg.eval.seed);

  if (opt.reports.count("error")) {
    const auto horizons = horizon_list(e.cfg.eval.horizons, n_max);
    const auto set = e.eval_set();
    try {
      const auto t = policy_error(policy, oracle, set, horizons, opt.workers);
      rep.tables.push_back(policy_error_table(t));
      kv["error.u_star_min"] = cell(t.u_star_min);
      kv["error.u_star_max"] = cell(t.u_star_max);
      for (const auto& r : t.rows) {
        kv["error.e_" + std::to_string(r.horizon)] = cell(r.error.mean);
        kv["error.count_" + std::to_string(r.horizon)] = cell(r.error.count);
      }
    } catch (const EvalRefused& ex) {
      kv["error.refused"] = ex.what();
    }
  }

  if (opt.reports.count("cost")) {
    const auto starts = e.closed_loop_starts();
    Table tab{"cost_to_go", {"controller", "c", "mean_L", "ci95", "count", "diverged", "mean_tracking_error"}, {}};
    auto add_rows = [&](const std::string& name, int c, const Controller& ctl) {
      std::vector<ClosedLoopResult> runs(starts.size());
      parallel_for(starts.size(), opt.workers, [&](std::size_t i) {
        runs[i] = cost_to_go(*e.model, *e.utility, ctl, starts[i].x0, starts[i].r_stream, e.cfg.eval.steps, n_max);
      });
      std::vector<double> costs, track;
      int diverged = 0;
      for (const auto& r : runs) {
        if (r.diverged) {
          ++diverged;
          continue;
        }
        costs.push_back(r.cost);
        track.push_back(r.mean_abs_tracking_error);
      }
      const Statistic s = summarize(costs);
      const Statistic tr = summarize(track);
      tab.add({name, cell(c), cell(s.mean), cell(s.ci95), cell(s.count), cell(diverged), cell(tr.mean)});
      kv["cost." + name + "_" + std::to_string(c)] = cell(s.mean);
    };
    for (double cd : e.cfg.eval.cycles) add_rows("policy", static_cast<int>(cd), policy_controller(policy, static_cast<int>(cd)));
    if (e.cfg.eval.oracle_closed_loop)
      for (double cd : e.cfg.eval.cycles) add_rows("oracle", static_cast<int>(cd), oracle_controller(oracle, static_cast<int>(cd)));
    rep.tables.push_back(tab);
  }

  if (opt.reports.count("anytime")) {
    const auto starts = e.closed_loop_starts();
    const auto rows = anytime_experiment(policy, *e.model, *e.utility, e.cfg.eval.budgets_ms,
                                         {e.cfg.eval.cycle_cost_ms}, starts, e.cfg.eval.steps, n_max, opt.workers);
    Table tab{"anytime", {"budget_ms", "mean_k", "min_k", "max_k", "mean_L", "ci95", "count", "diverged"}, {}};
    for (const auto& r : rows) {
      tab.add({cell(r.budget_ms), cell(r.depth.mean), cell(r.depth_min), cell(r.depth_max), cell(r.cost.mean),
               cell(r.cost.ci95), cell(r.cost.count), cell(r.diverged)});
      kv["anytime.k_" + cell(r.budget_ms)] = cell(r.depth.mean);
      kv["anytime.L_" + cell(r.budget_ms)] = cell(r.cost.mean);
    }
    rep.tables.push_back(tab);
  }

  if (opt.reports.count("sweep") && !e.cfg.sweep.empty()) {
    const ExperimentConfig& c = e.cfg;
    const auto nominal_model = build_model(c);
    const auto rows = robustness_sweep(
        policy, n_max, [&c](const std::map<std::string, double>& o) { return build_model(c, o); }, *e.utility,
        nominal_model->parameters(), c.sweep, [&e](const SystemModel& m) { return e.scenario(m); }, c.eval.steps,
        n_max, opt.workers);
    Table tab{"sweep", {"parameter", "value", "nominal", "tracking_error", "L", "diverged"}, {}};
    for (const auto& r : rows) {
      tab.add({r.parameter, cell(r.value), cell(r.nominal), cell(r.tracking_error), cell(r.cost), cell(r.diverged)});
      kv["sweep." + r.parameter + "_" + cell(r.value)] = cell(r.tracking_error);
    }
    const ClosedLoopStart base = e.scenario(*nominal_model);
    const auto nominal_run = cost_to_go(*nominal_model, *e.utility, policy_controller(policy, n_max), base.x0,
                                        base.r_stream, c.eval.steps, n_max);
    kv["sweep.nominal_tracking_error"] = cell(nominal_run.mean_abs_tracking_error);
    rep.tables.push_back(tab);
  }

  if (opt.reports.count("bellman")) {
    const auto set = e.eval_set();
    Table tab{"bellman", {"instance", "max_discrepancy", "conclusive"}, {}};
    double worst = 0.0;
    const std::size_t count = std::min<std::size_t>(set.size(), 20);
    std::vector<BellmanReport> reports(count);
    for (std::size_t i = 0; i < count; ++i)
      reports[i] = check_bellman(oracle, *e.model, set[i].x0, set[i].r, n_max, 0.0);
    for (std::size_t i = 0; i < count; ++i) {
      tab.add({cell(static_cast<int>(i)), cell(reports[i].max_discrepancy), cell(reports[i].conclusive)});
      if (reports[i].conclusive) worst = std::max(worst, reports[i].max_discrepancy);
    }
    kv["bellman.max_discrepancy"] = cell(worst);
    rep.tables.push_back(tab);
  }

  fs::create_directories(out_dir);
  for (const auto& t : rep.tables) write_csv(out_dir, t);
  write_text_file(out_dir / "summary.txt", kv_text(kv));

  // Wall-clock measurements are kept apart from the reproducible files.
  if (opt.reports.count("timing")) {
    const auto horizons = horizon_list(e.cfg.eval.timing_horizons, n_max);
    const auto set = e.eval_set();
    require(!set.empty(), "timing: empty evaluation set");
    const TimingProfile prof = timing_profile(policy, &oracle, horizons, set[0].x0, set[0].r, e.cfg.eval.timing_samples);
    Table tab{"timing", {"N", "policy_ms", "oracle_ms"}, {}};
    for (const auto& r : prof.rows) tab.add({cell(r.horizon), cell(r.policy_ms), cell(r.oracle_ms)});
    write_csv(out_dir, tab);
    KeyValues tk{{"policy_fit_r2", cell(prof.policy_fit_r2)},
                 {"policy_fit_slope_ms", cell(prof.policy_fit_slope)},
                 {"policy_fit_intercept_ms", cell(prof.policy_fit_intercept)}};
    write_text_file(out_dir / "timing_summary.txt", kv_text(tk));
    rep.tables.push_back(tab);
  }

  if (opt.out) {
    for (const auto& t : rep.tables) *opt.out << "== " << t.name << "\n" << render_table(t) << "\n";
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Closed-loop traces.

inline Table trace_table(const std::string& name, const ClosedLoopResult& res, const RefTraj& r_stream, int steps) {
  Table t{name, {"t"}, {}};
  const auto n = res.states.rows();
  const auto m = res.controls.rows();
  for (Eigen::Index i = 0; i < n; ++i) t.header.push_back("x" + std::to_string(i));
  for (Eigen::Index i = 0; i < m; ++i) t.header.push_back("u" + std::to_string(i));
  t.header.push_back("r");
  t.header.push_back("k");
  const auto done = res.controls.cols();
  for (Eigen::Index s = 0; s < done; ++s) {
    // Row s: state x_s, control u_s applied from it, reference r_{s+1} it tracks.
    std::vector<std::string> row{cell(static_cast<int>(s))};
    for (Eigen::Index i = 0; i < n; ++i) row.push_back(cell(res.states(i, s)));
    for (Eigen::Index i = 0; i < m; ++i) row.push_back(cell(res.controls(i, s)));
    row.push_back(cell(r_stream(0, s)));
    row.push_back(cell(res.depths.empty() ? 0 : res.depths[s]));
    t.add(row);
  }
  if (res.diverged) {
    std::vector<std::string> row{"diverged"};
    row.resize(t.header.size(), "");
    row[1] = cell(res.diverged_step);
    t.add(row);
  } else if (done > 0 && done == steps) {
    std::vector<std::string> row{cell(static_cast<int>(done))};
    for (Eigen::Index i = 0; i < n; ++i) row.push_back(cell(res.states(i, done)));
    row.resize(t.header.size(), "");
    t.add(row);
  }
  return t;
}

struct SimulateOptions {
  std::vector<int> cycles;
  int steps = 200;
  bool with_oracle = true;
  std::optional<double> budget_ms;  // anytime trace under the simulated clock
  int workers = 1;
  OracleCache* cache = nullptr;
};

inline std::vector<Table> run_simulate(const Experiment& e, const RecurrentPolicy& policy, const fs::path& out_dir,
                                       const SimulateOptions& opt) {
  require_architecture(policy, e.shape);
  const int n_max = e.n_max();
  Experiment local = e;
  local.cfg.eval.steps = opt.steps;
  const ClosedLoopStart sc = local.scenario(*e.model);
  const OracleFn oracle = e.oracle(opt.workers, opt.cache);
  struct Job {
    std::string name;
    Controller ctl;
  };
  std::vector<Job> jobs;
  for (int c : opt.cycles) {
    require(c >= 1 && c <= n_max, "simulate: cycles must lie in [1, N_max]");
    jobs.push_back({"trace_policy_c" + std::to_string(c), policy_controller(policy, c)});
  }
  if (opt.with_oracle)
    for (int c : opt.cycles) jobs.push_back({"trace_oracle_N" + std::to_string(c), oracle_controller(oracle, c)});
  std::vector<Table> tables(jobs.size());
  parallel_for(jobs.size(), opt.workers, [&](std::size_t j) {
    const auto res = cost_to_go(*e.model, *e.utility, jobs[j].ctl, sc.x0, sc.r_stream, opt.steps, n_max);
    tables[j] = trace_table(jobs[j].name, res, sc.r_stream, opt.steps);
  });
  if (opt.budget_ms) {
    std::vector<int> depths;
    const double budget = *opt.budget_ms;
    Controller ctl = [&](const Vec& x, const RefTraj& w) {
      SimulatedClock clock({e.cfg.eval.cycle_cost_ms});
      const AnytimeResult ar = anytime_infer(policy, x, w, budget, clock);
      depths.push_back(ar.k);
      return ar.u;
    };
    auto res = cost_to_go(*e.model, *e.utility, ctl, sc.x0, sc.r_stream, opt.steps, n_max);
    res.depths = depths;
    tables.push_back(trace_table("trace_anytime_b" + cell(budget), res, sc.r_stream, opt.steps));
  }
  fs::create_directories(out_dir);
  for (const auto& t : tables) write_csv(out_dir, t);
  return tables;
}

// ---------------------------------------------------------------------------
// Report consolidation.

struct ConsolidatedReport {
  std::string text;
  std::vector<std::string> errors;
  int tables = 0;
};

inline ConsolidatedReport consolidate_reports(const fs::path& dir) {
  ConsolidatedReport rep;
  if (!fs::is_directory(dir)) {
    rep.errors.push_back("not a directory: " + dir.string());
    return rep;
  }
  std::vector<fs::path> csvs;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".csv") csvs.push_back(entry.path());
  // Known tables first in a fixed order, then everything else by name.
  static const std::vector<std::string> order{"policy_error", "train_eval", "cost_to_go", "anytime", "sweep",
                                              "bellman",      "timing"};
  auto rank = [&](const fs::path& p) {
    const auto it = std::find(order.begin(), order.end(), p.stem().string());
    return it == order.end() ? order.size() : static_cast<std::size_t>(it - order.begin());
  };
  std::sort(csvs.begin(), csvs.end(), [&](const fs::path& a, const fs::path& b) {
    const auto ra = rank(a), rb = rank(b);
    return ra != rb ? ra < rb : a.filename().string() < b.filename().string();
  });
  for (const auto& path : csvs) {
    Table t;
    try {
      t = read_csv(path);
    } catch (const CsvError& ex) {
      rep.errors.push_back(ex.what());
      continue;
    }
    ++rep.tables;
    if (t.name == "sweep" && !t.header.empty() && t.header[0] == "parameter") {
      // One section per swept parameter, ordered by name.
      std::map<std::string, Table> by_param;
      for (const auto& row : t.rows) {
        auto& sub = by_param[row[0]];
        if (sub.header.empty()) {
          sub.header.assign(t.header.begin() + 1, t.header.end());
          sub.name = "sweep: " + row[0];
        }
        sub.rows.emplace_back(row.begin() + 1, row.end());
      }
      for (const auto& [param, sub] : by_param) rep.text += "## " + sub.name + "\n\n" + render_table(sub) + "\n";
      continue;
    }
    rep.text += "## " + t.name + "\n\n" + render_table(t) + "\n";
  }
  if (fs::exists(dir / "summary.txt")) {
    rep.text += "## summary\n\n";
    for (const auto& [k, v] : read_kv(dir / "summary.txt")) rep.text += k + " = " + v + "\n";
    rep.text += "\n";
  }
  if (!rep.errors.empty()) {
    rep.text += "## errors\n\n";
    for (const auto& err : rep.errors) rep.text += err + "\n";
  }
  return rep;
}

}  // namespace rmpc
