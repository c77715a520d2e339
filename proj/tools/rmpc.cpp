// rmpc: train, evaluate and inspect recurrent MPC policies.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include "rmpc/rmpc.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <sstream>

namespace {

using namespace rmpc;

constexpr int kOk = 0;
constexpr int kRuntime = 1;
constexpr int kUsage = 2;

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::unique_ptr<OracleCache> open_cache(const ExperimentConfig& cfg, bool disabled) {
  if (disabled) return nullptr;
  const char* env = std::getenv("RMPC_CACHE_DIR");
  const fs::path dir = env && *env ? fs::path(env) : fs::path(cfg.paths.cache_dir);
  if (dir.empty()) return nullptr;
  return std::make_unique<OracleCache>(dir);
}

struct Common {
  std::string config;
  std::string out;
  int workers = default_workers();
  bool no_cache = false;
};

void add_common(CLI::App* app, Common& c, bool out_flag = true) {
  app->add_option("--config,-c", c.config, "experiment config file")->required();
  if (out_flag) app->add_option("--out,-o", c.out, "output directory (default: paths.output_dir from the config)");
  app->add_option("--workers,-j", c.workers, "worker threads; 1 gives fully serial execution")
      ->check(CLI::PositiveNumber);
  app->add_flag("--no-cache", c.no_cache, "do not read or write the oracle cache");
}

RecurrentPolicy load_policy_for(const Experiment& e, const std::string& path) {
  RecurrentPolicy p = load_checkpoint(path);
  require_architecture(p, e.shape);
  return p;
}

int cmd_train(const Common& c, std::optional<long long> max_iters, bool no_eval, bool quiet) {
  const Experiment e = Experiment::from_config(load_config(c.config));
  const fs::path out = c.out.empty() ? fs::path(e.cfg.paths.output_dir) : fs::path(c.out);
  auto cache = open_cache(e.cfg, c.no_cache);
  TrainRunOptions opt;
  opt.workers = c.workers;
  opt.max_iterations = max_iters;
  opt.eval_checkpoints = !no_eval;
  opt.progress = quiet ? nullptr : &std::cerr;
  opt.cache = cache.get();
  const TrainingHistory h = run_training(e, out, opt);
  std::cout << "trained " << h.iterations << " iterations (" << h.stop_reason << "), checkpoint "
            << (out / "policy.rmpc").string() << "\n";
  if (!h.snapshots.empty()) {
    const auto horizons = horizon_list(e.cfg.eval.horizons, e.n_max());
    std::cout << "e_N at iteration " << h.snapshots.back().iteration << ":";
    for (std::size_t i = 0; i < horizons.size(); ++i)
      std::cout << " N" << horizons[i] << "=" << fmt_double(h.snapshots.back().policy_error[i]);
    std::cout << "\n";
  }
  return kOk;
}

int cmd_eval(const Common& c, const std::string& checkpoint, const std::string& reports) {
  const Experiment e = Experiment::from_config(load_config(c.config));
  const RecurrentPolicy policy = load_policy_for(e, checkpoint);
  const fs::path out = c.out.empty() ? fs::path(e.cfg.paths.output_dir) / "eval" : fs::path(c.out);
  auto cache = open_cache(e.cfg, c.no_cache);
  EvalRunOptions opt;
  opt.workers = c.workers;
  opt.cache = cache.get();
  opt.out = &std::cout;
  if (!reports.empty()) {
    opt.reports.clear();
    for (const auto& r : split_list(reports)) {
      if (r == "all") {
        opt.reports.insert(all_reports().begin(), all_reports().end());
        continue;
      }
      if (std::find(all_reports().begin(), all_reports().end(), r) == all_reports().end())
        throw CLI::ValidationError("--report", "unknown report '" + r + "'");
      opt.reports.insert(r);
    }
  }
  const EvalReport rep = run_eval(e, policy, out, opt);
  if (opt.reports.count("bellman")) {
    std::cout << "bellman max discrepancy: " << rep.summary.at("bellman.max_discrepancy") << "\n";
  }
  KeyValues manifest = manifest_for(e, "eval");
  manifest["checkpoint"] = fs::path(checkpoint).filename().string();
  save_config(out / "config.toml", e.cfg);
  write_text_file(out / "manifest.txt", kv_text(manifest));
  std::cout << "reports written to " << out.string() << "\n";
  return kOk;
}

int cmd_simulate(const Common& c, const std::string& checkpoint, const std::string& cycles, int steps,
                 std::optional<double> budget, bool no_oracle) {
  const Experiment e = Experiment::from_config(load_config(c.config));
  const RecurrentPolicy policy = load_policy_for(e, checkpoint);
  const fs::path out = c.out.empty() ? fs::path(e.cfg.paths.output_dir) / "traces" : fs::path(c.out);
  auto cache = open_cache(e.cfg, c.no_cache);
  SimulateOptions opt;
  if (cycles.empty()) {
    opt.cycles = {e.n_max()};
  } else {
    for (const auto& s : split_list(cycles)) {
      try {
        opt.cycles.push_back(std::stoi(s));
      } catch (const std::exception&) {
        throw CLI::ValidationError("--cycles", "'" + s + "' is not an integer");
      }
      if (opt.cycles.back() < 1 || opt.cycles.back() > e.n_max())
        throw CLI::ValidationError("--cycles", "cycle counts must lie in [1, " + std::to_string(e.n_max()) + "]");
    }
  }
  opt.steps = steps;
  opt.budget_ms = budget;
  opt.with_oracle = !no_oracle;
  opt.workers = c.workers;
  opt.cache = cache.get();
  const auto tables = run_simulate(e, policy, out, opt);
  for (const auto& t : tables) {
    const bool diverged = !t.rows.empty() && t.rows.back()[0] == "diverged";
    std::cout << t.name << ".csv: " << t.rows.size() << " rows" << (diverged ? " (diverged)" : "") << "\n";
  }
  return kOk;
}

int cmd_report(const std::string& dir, const std::string& output) {
  const ConsolidatedReport rep = consolidate_reports(dir);
  if (rep.tables == 0 && rep.errors.empty()) {
    std::cerr << "rmpc report: no tables found in " << dir << "\n";
    return kRuntime;
  }
  const fs::path target = output.empty() ? fs::path(dir) / "report.txt" : fs::path(output);
  write_text_file(target, rep.text);
  std::cout << rep.text;
  if (!rep.errors.empty()) {
    std::cerr << "rmpc report: " << rep.errors.size() << " unreadable table(s)\n";
    return kRuntime;
  }
  return kOk;
}

// Cross-checks the configured oracle on held-out instances: Bellman
// consistency always, and shooting against Riccati for linear models.
int cmd_oracle_check(const Common& c, int instances, int horizon, double tol) {
  const Experiment e = Experiment::from_config(load_config(c.config));
  const int n = horizon > 0 ? horizon : e.n_max();
  if (n > e.n_max()) throw CLI::ValidationError("--horizon", "must not exceed training.horizon");
  const OracleFn oracle = e.oracle(c.workers);
  auto set = e.eval_set();
  if (instances < static_cast<int>(set.size())) set.resize(instances);
  int failures = 0, inconclusive = 0;
  double worst = 0.0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const BellmanReport rep = check_bellman(oracle, *e.model, set[i].x0, set[i].r, n, tol);
    worst = std::max(worst, rep.max_discrepancy);
    if (!rep.conclusive)
      ++inconclusive;
    else if (!rep.passed)
      ++failures;
  }
  std::cout << "bellman: " << set.size() << " instances, N=" << n << ", max discrepancy " << fmt_double(worst)
            << ", failures " << failures << ", inconclusive " << inconclusive << "\n";
  if (const auto lin = std::dynamic_pointer_cast<const LinearModel>(e.model)) {
    ShootingOptions opts = e.cfg.oracle.shooting;
    opts.workers = c.workers;
    double dv = 0.0, du = 0.0;
    for (const auto& inst : set) {
      const auto ric = solve_riccati(*lin, *e.utility, inst.x0, inst.r, n);
      const auto sh = solve_shooting(*e.model, *e.utility, inst.x0, inst.r, n, opts);
      dv = std::max(dv, std::abs(sh.value - ric.value) / std::max(1.0, ric.value));
      du = std::max(du, (sh.controls - ric.controls).cwiseAbs().maxCoeff());
    }
    std::cout << "shooting vs riccati: max relative value gap " << fmt_double(dv) << ", max control gap "
              << fmt_double(du) << "\n";
  }
  return failures > 0 ? kRuntime : kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Recurrent MPC policies: training, evaluation and oracle checks"};
  app.require_subcommand(1);
  app.set_version_flag("--version", RMPC_VERSION);

  Common train_c, eval_c, sim_c, oracle_c;
  long long max_iters = -1;
  bool no_eval = false, quiet = false;
  auto* train = app.add_subcommand("train", "train a policy from a config");
  add_common(train, train_c);
  train->add_option("--max-iters", max_iters, "override training.max_iterations");
  train->add_flag("--no-eval", no_eval, "skip e_N evaluation at checkpoints");
  train->add_flag("--quiet,-q", quiet, "no progress output");

  std::string eval_ckpt, reports;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval, eval_c);
  eval->add_option("--checkpoint", eval_ckpt, "policy checkpoint")->required()->check(CLI::ExistingFile);
  eval->add_option("--report", reports, "comma list of error,cost,anytime,sweep,timing,bellman or all");

  std::string sim_ckpt, cycles;
  int steps = 200;
  double budget = -1.0;
  bool no_oracle = false;
  auto* sim = app.add_subcommand("simulate", "write closed-loop traces");
  add_common(sim, sim_c);
  sim->add_option("--checkpoint", sim_ckpt, "policy checkpoint")->required()->check(CLI::ExistingFile);
  sim->add_option("--cycles", cycles, "comma list of cycle counts (default N_max)");
  sim->add_option("--steps", steps, "closed-loop steps")->check(CLI::NonNegativeNumber);
  sim->add_option("--budget-ms", budget, "also trace anytime inference under this per-step budget");
  sim->add_flag("--no-oracle", no_oracle, "skip oracle traces");

  std::string report_dir, report_out;
  auto* report = app.add_subcommand("report", "consolidate report tables into one text summary");
  report->add_option("dir", report_dir, "directory holding report CSV files")->required();
  report->add_option("--output", report_out, "summary file (default <dir>/report.txt)");

  int instances = 20, horizon = 0;
  double tol = 1e-3;
  auto* oracle = app.add_subcommand("oracle-check", "cross-check the configured oracle");
  add_common(oracle, oracle_c, false);
  oracle->add_option("--instances", instances, "instances to check")->check(CLI::PositiveNumber);
  oracle->add_option("--horizon", horizon, "horizon (default training.horizon)");
  oracle->add_option("--tol", tol, "Bellman discrepancy tolerance");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*train) return cmd_train(train_c, max_iters >= 0 ? std::optional<long long>(max_iters) : std::nullopt, no_eval, quiet);
    if (*eval) return cmd_eval(eval_c, eval_ckpt, reports);
    if (*sim)
      return cmd_simulate(sim_c, sim_ckpt, cycles, steps, budget >= 0 ? std::optional<double>(budget) : std::nullopt,
                          no_oracle);
    if (*report) return cmd_report(report_dir, report_out);
    if (*oracle) return cmd_oracle_check(oracle_c, instances, horizon, tol);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "rmpc: " << e.what() << "\n";
    return kUsage;
  } catch (const ConfigError& e) {
    std::cerr << "rmpc: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "rmpc: " << e.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}
