#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <sys/wait.h>

using namespace rmpc;
namespace fs = std::filesystem;

namespace {

const fs::path kSource = RMPC_SOURCE_DIR;
const fs::path kCli = RMPC_CLI_PATH;

// Small and fast: 1x4 plain cell, N_max = 3, Riccati oracle.
const char* kTinyConfig = R"(
[model]
kind = "double_integrator"

[model.params]
dt = 0.05
u_max = 1

[utility]
track_weight = 1
state_weights = [0, 0.05]
control_weights = [0.01]

[policy]
cell = "plain"
layers = 1
hidden = 4
output_scale = [1]

[training]
horizon = 3
learning_rate = 0.01
batch_size = 16
epsilon = 0
max_iterations = 4
eval_every = 2

[sampler]
state_low = [-0.03, -0.1]
state_high = [0.03, 0.1]
amplitude = [0, 0.05]
wavelength = [2, 6]
step_length = 0.05

[eval]
instances = 12
closed_loop_starts = 3
steps = 10
cycles = [1, 3]
budgets_ms = [0.5, 2.5]
scenario_amplitude = 0.04
scenario_wavelength = 4

[sweep]
dt = [0.04, 0.05]
)";

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun run_cli(const std::string& args, const fs::path& dir) {
  const fs::path out = dir / "stdout.txt", err = dir / "stderr.txt";
  const std::string cmd = "cd '" + dir.string() + "' && RMPC_CACHE_DIR= '" + kCli.string() + "' " + args + " >'" +
                          out.string() + "' 2>'" + err.string() + "'";
  const int status = std::system(cmd.c_str());
  CliRun r{WIFEXITED(status) ? WEXITSTATUS(status) : -1, "", ""};
  if (fs::exists(out)) r.out = test::slurp(out);
  if (fs::exists(err)) r.err = test::slurp(err);
  return r;
}

fs::path tiny_config(const fs::path& dir) {
  const fs::path p = dir / "tiny.toml";
  write_text_file(p, kTinyConfig);
  return p;
}

}  // namespace

TEST(Config, ShippedConfigsRoundTrip) {
  for (const char* name : {"lq.toml", "bicycle.toml", "bicycle_desk.toml"}) {
    const auto cfg = load_config(kSource / "exp" / name);
    const std::string text = save_config_text(cfg);
    const auto again = parse_config(text, cfg.base_dir);
    EXPECT_TRUE(again == cfg) << name;
    EXPECT_EQ(save_config_text(again), text) << name;
    EXPECT_EQ(config_hash(again), config_hash(cfg)) << name;
  }
}

TEST(Config, UnknownKeyNamesLine) {
  try {
    parse_config("[model]\nkind = \"double_integrator\"\n\n[training]\nlearnign_rate = 0.1\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.line(), 5);
    EXPECT_NE(std::string(e.what()).find("learnign_rate"), std::string::npos);
  }
}

TEST(Config, RejectsMalformedInput) {
  EXPECT_THROW(parse_config("[modle]\n"), ConfigError);
  EXPECT_THROW(parse_config("[model]\nkind = \"bicycle\"\n[model.params]\nwheelbase = 2\n"), ConfigError);
  EXPECT_THROW(parse_config("[training]\nseed = 1\nseed = 2\n"), ConfigError);
  EXPECT_THROW(parse_config("[training]\nseed\n"), ConfigError);
  EXPECT_THROW(parse_config("seed = 1\n"), ConfigError);
  EXPECT_THROW(parse_config("[training]\nlearning_rate = \"fast\"\n"), ConfigError);
  EXPECT_THROW(parse_config("[eval]\nbudgets_ms = [3, 1]\n"), ConfigError);
}

TEST(Config, MissingFileNamesPath) {
  try {
    load_config("/nonexistent/rmpc.toml");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/rmpc.toml"), std::string::npos);
  }
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const auto dir = test::temp_dir("ckpt");
  PolicyShape s = test::small_shape(CellKind::gated, 4, 6, 0.2, 2);
  s.input_scale = Vec::LinSpaced(5, 0.5, 2.0);
  RecurrentPolicy p(s);
  p.init_params(11);
  save_checkpoint(dir / "p.rmpc", p, {{"iteration", "7"}});
  const RecurrentPolicy q = load_checkpoint(dir / "p.rmpc");
  EXPECT_EQ(q.params(), p.params());
  EXPECT_TRUE(q.shape() == p.shape());
  const auto meta = load_checkpoint_meta(dir / "p.rmpc");
  EXPECT_EQ(meta.at("iteration"), "7");
  EXPECT_EQ(meta.at("param_count"), std::to_string(p.param_count()));
  EXPECT_EQ(encode_checkpoint(q), test::slurp(dir / "p.rmpc"));
}

TEST(Checkpoint, CorruptFilesRejected) {
  RecurrentPolicy p(test::small_shape(CellKind::plain, 2, 3));
  const std::string good = encode_checkpoint(p);
  std::string bad = good;
  bad[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bad), ConfigError);
  EXPECT_THROW(decode_checkpoint(good.substr(0, good.size() - 3)), ConfigError);
  EXPECT_THROW(decode_checkpoint(good + "x"), ConfigError);
}

TEST(Checkpoint, ArchitectureMismatchNamesBoth) {
  RecurrentPolicy p(test::small_shape(CellKind::plain, 2, 3));
  try {
    require_architecture(p, test::small_shape(CellKind::gated, 2, 3));
    FAIL();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("checkpoint has"), std::string::npos);
    EXPECT_NE(msg.find("config expects"), std::string::npos);
  }
}

TEST(Report, ConsolidatesInFixedOrderAndSplitsSweep) {
  const auto dir = test::temp_dir("report");
  write_text_file(dir / "zeta.csv", "a\n1\n");
  write_text_file(dir / "cost_to_go.csv", "cycles,cost\n1,2\n");
  write_text_file(dir / "policy_error.csv", "N,e\n1,0.5\n");
  write_text_file(dir / "sweep.csv", "parameter,value,cost\nmu,0.7,1\nmass,1200,2\nmu,0.8,3\n");
  write_text_file(dir / "summary.txt", "k=v\n");
  const auto rep = consolidate_reports(dir);
  EXPECT_EQ(rep.tables, 4);
  EXPECT_TRUE(rep.errors.empty());
  const auto pos = [&](const std::string& s) { return rep.text.find(s); };
  EXPECT_LT(pos("## policy_error"), pos("## cost_to_go"));
  EXPECT_LT(pos("## cost_to_go"), pos("## sweep: mass"));
  EXPECT_LT(pos("## sweep: mass"), pos("## sweep: mu"));
  EXPECT_LT(pos("## sweep: mu"), pos("## zeta"));
  EXPECT_NE(pos("k = v"), std::string::npos);
}

TEST(Report, RaggedTableReportedAsError) {
  const auto dir = test::temp_dir("report-bad");
  write_text_file(dir / "cost_to_go.csv", "a,b\n1\n");
  write_text_file(dir / "anytime.csv", "a\n2\n");
  const auto rep = consolidate_reports(dir);
  EXPECT_EQ(rep.tables, 1);
  ASSERT_EQ(rep.errors.size(), 1u);
  EXPECT_NE(rep.errors[0].find("line 2"), std::string::npos);
}

// ---------------------------------------------------------------------------
// The rmpc binary end to end.

TEST(Cli, MissingConfigIsUsageError) {
  const auto dir = test::temp_dir("cli-missing");
  const CliRun r = run_cli("train -c nope.toml", dir);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("nope.toml"), std::string::npos);
}

TEST(Cli, BadFlagIsUsageError) {
  const auto dir = test::temp_dir("cli-flag");
  EXPECT_EQ(run_cli("train --frobnicate", dir).code, 2);
  EXPECT_EQ(run_cli("", dir).code, 2);
}

TEST(Cli, TrainEvalSimulateReport) {
  const auto dir = test::temp_dir("cli-flow");
  tiny_config(dir);
  CliRun r = run_cli("train -c tiny.toml -o run -j 1 -q", dir);
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"policy.rmpc", "policy.rmpc.meta", "train_log.ndjson", "manifest.txt", "config.toml",
                        "train_eval.csv", "checkpoints/ckpt-00000002.rmpc"})
    EXPECT_TRUE(fs::exists(dir / "run" / f)) << f;

  r = run_cli("eval -c tiny.toml --checkpoint run/policy.rmpc -o ev1 -j 1 --report all", dir);
  ASSERT_EQ(r.code, 0) << r.err;
  r = run_cli("eval -c tiny.toml --checkpoint run/policy.rmpc -o ev2 -j 1 --report all", dir);
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"policy_error.csv", "cost_to_go.csv", "anytime.csv", "sweep.csv", "bellman.csv",
                        "summary.txt", "manifest.txt"})
    EXPECT_EQ(test::slurp(dir / "ev1" / f), test::slurp(dir / "ev2" / f)) << f;
  EXPECT_TRUE(fs::exists(dir / "ev1" / "timing.csv"));

  r = run_cli("simulate -c tiny.toml --checkpoint run/policy.rmpc -o tr --steps 0 --cycles 1,3", dir);
  ASSERT_EQ(r.code, 0) << r.err;
  const Table t = read_csv(dir / "tr" / "trace_policy_c1.csv");
  EXPECT_EQ(t.header[0], "t");

  r = run_cli("report ev1", dir);
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir / "ev1" / "report.txt"));
  EXPECT_NE(r.out.find("## policy_error"), std::string::npos);
}

TEST(Cli, ZeroIterationTrainingAndUntrainedEval) {
  const auto dir = test::temp_dir("cli-zero");
  tiny_config(dir);
  CliRun r = run_cli("train -c tiny.toml -o run --max-iters 0 -q", dir);
  ASSERT_EQ(r.code, 0) << r.err;
  r = run_cli("eval -c tiny.toml --checkpoint run/policy.rmpc -o ev", dir);
  EXPECT_EQ(r.code, 0) << r.err;
}

TEST(Cli, CheckpointFromOtherArchitectureRefused) {
  const auto dir = test::temp_dir("cli-arch");
  tiny_config(dir);
  save_checkpoint(dir / "other.rmpc", RecurrentPolicy(test::small_shape(CellKind::gated, 2, 4)));
  const CliRun r = run_cli("eval -c tiny.toml --checkpoint other.rmpc -o ev", dir);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("architecture mismatch"), std::string::npos);
}

TEST(Cli, ReportOnEmptyDirectoryFails) {
  const auto dir = test::temp_dir("cli-report");
  fs::create_directories(dir / "empty");
  EXPECT_EQ(run_cli("report empty", dir).code, 1);
}

TEST(Cli, OutputDirectoryFromDifferentConfigRefused) {
  const auto dir = test::temp_dir("cli-manifest");
  tiny_config(dir);
  ASSERT_EQ(run_cli("train -c tiny.toml -o run --max-iters 0 -q", dir).code, 0);
  std::string text = kTinyConfig;
  text.replace(text.find("hidden = 4"), 10, "hidden = 5");
  write_text_file(dir / "tiny.toml", text);
  const CliRun r = run_cli("train -c tiny.toml -o run --max-iters 0 -q", dir);
  EXPECT_NE(r.code, 0);
}
