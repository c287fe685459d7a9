#include <algorithm>
#include <chrono>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "cli.hpp"
#include "test_util.hpp"
#include "wmft/envs.hpp"

namespace wmft {
namespace {

namespace fs = std::filesystem;
using testing_util::scratch_dir;

constexpr const char* kSmallConfig = R"(# quick run for command-line tests
[env]
id = reach2d
episode_length = 12

[model]
latent_state_dimension = 6
mlp_hidden_size = 16
hidden_layers = 1
q_ensemble_size = 3

[plan]
planning_horizon = 3
population_size = 24
elite_fraction = 4
planning_iterations = 2

[replay]
batch_size = 8

[run]
pretrain_steps = 20
online_trials = 2
eval_episodes = 2
)";

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run_cli(std::vector<std::string> args) {
  std::ostringstream out;
  std::ostringstream err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(f), {});
}

std::size_t count_lines(const std::string& text) {
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

std::size_t count_occurrences(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
  return n;
}

// Scratch directory holding the small config and a 10-episode dataset.
class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = scratch_dir(std::string("cli_") + info->name());
    config_ = (dir_ / "small.cfg").string();
    std::ofstream(config_) << kSmallConfig;
    data_ = (dir_ / "data.jsonl").string();
    ASSERT_EQ(run_cli({"--config", config_, "--seed", "1", "--out", data_, "gen-data", "--episodes",
                       "10"}).code,
              cli::kExitOk);
  }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  Result pretrain_into(const std::string& run, std::vector<std::string> extra = {}) {
    std::vector<std::string> args{"--config", config_, "--out", path(run)};
    args.insert(args.end(), extra.begin(), extra.end());
    args.insert(args.end(), {"pretrain", "--dataset", data_});
    return run_cli(args);
  }

  std::string checkpoint(const std::string& run) const { return path(run + "/pretrain_20"); }

  fs::path dir_;
  std::string config_;
  std::string data_;
};

TEST_F(CliTest, GenDataWritesOneRecordPerEpisodeAndRepeatsExactly) {
  const Result a = run_cli({"--seed", "1", "--out", path("a.jsonl"), "gen-data", "--env", "reach2d",
                            "--kind", "medium", "--episodes", "100"});
  ASSERT_EQ(a.code, cli::kExitOk) << a.err;
  EXPECT_NE(a.out.find("wrote 100 episodes"), std::string::npos);
  EXPECT_EQ(count_lines(slurp(path("a.jsonl"))), 101u);  // header plus 100 records
  run_cli({"--seed", "1", "--out", path("b.jsonl"), "gen-data", "--env", "reach2d", "--kind", "medium",
           "--episodes", "100"});
  EXPECT_EQ(slurp(path("a.jsonl")), slurp(path("b.jsonl")));
}

TEST_F(CliTest, GenDataMediumReplayHasRequestedTransitions) {
  const Result r = run_cli({"--config", config_, "--out", path("mr.jsonl"), "gen-data", "--kind",
                            "medium-replay", "--transitions", "30"});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  EXPECT_NE(r.out.find("(30 transitions"), std::string::npos) << r.out;
}

TEST_F(CliTest, InvalidEnvironmentIsAUsageErrorAndWritesNothing) {
  const Result r = run_cli({"--out", path("bad.jsonl"), "gen-data", "--env", "walker"});
  EXPECT_EQ(r.code, cli::kExitUsage);
  EXPECT_FALSE(fs::exists(path("bad.jsonl")));
  EXPECT_NE(r.err.find("walker"), std::string::npos);
}

TEST_F(CliTest, UsageErrorsExitWithTwo) {
  EXPECT_EQ(run_cli({}).code, cli::kExitUsage);
  EXPECT_EQ(run_cli({"teleport"}).code, cli::kExitUsage);
  EXPECT_EQ(run_cli({"--config", path("missing.cfg"), "--out", path("r"), "pretrain"}).code, cli::kExitUsage);
  EXPECT_EQ(run_cli({"--config", config_, "--out", path("r"), "pretrain", "--dataset", path("none.jsonl")}).code,
            cli::kExitUsage);
  EXPECT_EQ(run_cli({"--config", config_, "--override", "batch_size=3", "--out", path("r"), "pretrain",
                     "--dataset", data_}).code,
            cli::kExitUsage);
  EXPECT_EQ(run_cli({"--config", config_, "eval", "--checkpoint", path("missing.ckpt")}).code, cli::kExitUsage);
  EXPECT_EQ(run_cli({"--help"}).code, cli::kExitOk);
}

TEST_F(CliTest, NumericBlowUpIsARuntimeFailure) {
  const Result r = pretrain_into("blowup", {"--override", "learning_rate=1e300"});
  EXPECT_EQ(r.code, cli::kExitRuntime) << r.out << r.err;
}

TEST_F(CliTest, PretrainSmokeRunWritesCheckpointAndOneRowPerStep) {
  const auto started = std::chrono::steady_clock::now();
  const Result r = pretrain_into("run", {"--override", "pretrain_steps=200", "--seed", "3"});
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  EXPECT_LT(seconds, 60.0);
  EXPECT_TRUE(fs::exists(path("run/pretrain_200")));
  EXPECT_EQ(count_lines(slurp(path("run/metrics.csv"))), 201u);  // header plus 200 rows
  EXPECT_NE(r.out.find("offline eval: episodes=2"), std::string::npos) << r.out;
}

TEST_F(CliTest, LambdaOverrideChangesOnlyLambdaInEchoedConfig) {
  ASSERT_EQ(pretrain_into("base").code, cli::kExitOk);
  ASSERT_EQ(pretrain_into("zero", {"--override", "lambda=0"}).code, cli::kExitOk);
  std::istringstream a(slurp(path("base/config.cfg")));
  std::istringstream b(slurp(path("zero/config.cfg")));
  std::vector<std::string> differing;
  for (std::string la, lb; std::getline(a, la) && std::getline(b, lb);) {
    if (la != lb) differing.push_back(la + " -> " + lb);
  }
  ASSERT_EQ(differing.size(), 1u);
  EXPECT_EQ(differing[0], "lambda = 1 -> lambda = 0");
}

TEST_F(CliTest, EchoedConfigReproducesMetricsAndInputsStayUntouched) {
  const std::string before = slurp(data_);
  ASSERT_EQ(pretrain_into("first").code, cli::kExitOk);
  const Result again = run_cli({"--config", path("first/config.cfg"), "--out", path("second"), "pretrain",
                                "--dataset", data_});
  ASSERT_EQ(again.code, cli::kExitOk) << again.err;
  EXPECT_EQ(slurp(path("first/metrics.csv")), slurp(path("second/metrics.csv")));
  EXPECT_EQ(slurp(data_), before);
}

TEST_F(CliTest, FinetuneZeroTrialsDoesNotTouchTheEnvironment) {
  ASSERT_EQ(pretrain_into("pre").code, cli::kExitOk);
  const std::uint64_t before = step_calls();
  const Result r = run_cli({"--config", config_, "--out", path("ft"), "finetune", "--checkpoint",
                            checkpoint("pre"), "--trials", "0"});
  EXPECT_EQ(r.code, cli::kExitOk) << r.err;
  EXPECT_EQ(step_calls(), before);
}

TEST_F(CliTest, FinetunePrintsOneSummaryPerTrial) {
  ASSERT_EQ(pretrain_into("pre").code, cli::kExitOk);
  const Result r = run_cli({"--config", config_, "--out", path("ft"), "finetune", "--checkpoint",
                            checkpoint("pre"), "--dataset", data_, "--trials", "3"});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  EXPECT_EQ(count_occurrences(r.out, "/3 return="), 3u) << r.out;
  EXPECT_NE(r.out.find("trial 3/3"), std::string::npos);
  EXPECT_TRUE(fs::exists(path("ft/finetune_3")));
  const std::string metrics = slurp(path("ft/metrics.csv"));
  EXPECT_NE(metrics.find("\nfinetune,"), std::string::npos);
}

TEST_F(CliTest, FromScratchRunIsLabelledOnline) {
  const Result r = run_cli({"--config", config_, "--out", path("scratch"), "finetune", "--from-scratch"});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  const std::string metrics = slurp(path("scratch/metrics.csv"));
  EXPECT_NE(metrics.find("\nonline,"), std::string::npos);
  EXPECT_EQ(metrics.find("\nfinetune,"), std::string::npos);
  EXPECT_NE(r.out.find("online eval"), std::string::npos);
}

TEST_F(CliTest, FinetuneRejectsMismatchedCheckpoint) {
  ASSERT_EQ(pretrain_into("pre").code, cli::kExitOk);
  const Result wrong_env = run_cli({"--config", config_, "--override", "env.id=push2d", "--out", path("ft"),
                                    "finetune", "--checkpoint", checkpoint("pre")});
  EXPECT_EQ(wrong_env.code, cli::kExitUsage);
  const Result wrong_dims = run_cli({"--config", config_, "--override", "latent_state_dimension=7", "--out",
                                     path("ft2"), "finetune", "--checkpoint", checkpoint("pre")});
  EXPECT_EQ(wrong_dims.code, cli::kExitUsage);
  const Result both = run_cli({"--config", config_, "--out", path("ft3"), "finetune", "--checkpoint",
                               checkpoint("pre"), "--from-scratch"});
  EXPECT_EQ(both.code, cli::kExitUsage);
}

TEST_F(CliTest, EvalIsRepeatableAndTakesLambdaAtTestTime) {
  ASSERT_EQ(pretrain_into("pre").code, cli::kExitOk);
  const std::string ckpt_before = slurp(checkpoint("pre"));
  auto eval = [&](const std::string& lambda, bool verbose) {
    std::vector<std::string> args{"--config", config_, "eval", "--checkpoint", checkpoint("pre"),
                                  "--lambda", lambda, "--episodes", "3"};
    if (verbose) args.push_back("--verbose");
    return run_cli(args);
  };
  const Result a = eval("0", false);
  ASSERT_EQ(a.code, cli::kExitOk) << a.err;
  EXPECT_EQ(eval("0", false).out, a.out);
  const Result b = eval("1", false);
  EXPECT_EQ(a.out.rfind("eval lambda=0: ", 0), 0u) << a.out;
  EXPECT_EQ(b.out.rfind("eval lambda=1: ", 0), 0u) << b.out;
  EXPECT_EQ(count_lines(a.out), 1u);
  const Result v = eval("1", true);
  EXPECT_EQ(count_lines(v.out), 4u);
  EXPECT_NE(v.out.find("  episode 2 seed="), std::string::npos);
  EXPECT_EQ(slurp(checkpoint("pre")), ckpt_before);
}

TEST_F(CliTest, SweepTabulatesEveryCoefficient) {
  ASSERT_EQ(pretrain_into("pre").code, cli::kExitOk);
  const Result r = run_cli({"--config", config_, "--out", path("sweep"), "sweep", "--checkpoint",
                            checkpoint("pre"), "--episodes", "1"});
  ASSERT_EQ(r.code, cli::kExitOk) << r.err;
  const std::string table = slurp(path("sweep/sweep.csv"));
  EXPECT_EQ(count_lines(table), 7u);
  for (const char* l : {"\n0,", "\n0.3,", "\n1,", "\n3,", "\n10,", "\n20,"}) {
    EXPECT_NE(table.find(l), std::string::npos) << l;
  }
}

}  // namespace
}  // namespace wmft
