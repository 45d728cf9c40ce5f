#include <gtest/gtest.h>

#include <chrono>
#include <filesystem>
#include <iterator>
#include <sstream>

#include "cd3t/subtask/subtask_set.hpp"
#include "cd3t/trainer/metrics.hpp"
#include "cli/cli.hpp"

using namespace cd3t;
namespace fs = std::filesystem;

namespace {

const fs::path kSmokeConfig = fs::path(CD3T_CONFIG_DIR) / "lbf_smoke.cfg";

struct CliResult {
    int code = 0;
    std::string out;
    std::string err;
};

CliResult run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "cd3t");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    CliResult r;
    r.code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

fs::path scratch_dir(const std::string& name) {
    auto dir = fs::temp_directory_path() / ("cd3t_smoke_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST(Smoke, TrainEvalPlotInspect) {
    const auto start = std::chrono::steady_clock::now();
    const auto root = scratch_dir("full");
    auto train = run_cli({"train", "--config", kSmokeConfig.string(), "--seed", "1", "--runs-root", root.string()});
    ASSERT_EQ(train.code, 0) << train.err;

    std::vector<fs::path> runs;
    for (const auto& entry : fs::directory_iterator(root)) runs.push_back(entry.path());
    ASSERT_EQ(runs.size(), 1u);
    const auto run = runs.front();
    EXPECT_TRUE(run.filename().string().ends_with("_seed1"));

    auto table = trainer::read_metrics(run / "metrics.csv");
    auto curve = trainer::test_curve(table);
    ASSERT_EQ(curve.t.size(), 7u);
    for (std::size_t i = 0; i < curve.t.size(); ++i) EXPECT_DOUBLE_EQ(curve.t[i], 10000.0 * static_cast<double>(i));
    auto set = subtask::read_decomposition(run / "decomposition.json");
    EXPECT_EQ(set.clusters, 3);
    EXPECT_GE(set.frozen_at, 50000);
    for (const char* name : {"ckpt_30000.pt", "ckpt_60000.pt", "final.pt"}) {
        EXPECT_TRUE(fs::exists(run / "checkpoints" / name)) << name;
    }
    EXPECT_TRUE(fs::exists(run / "traces" / "episode_1.jsonl"));

    const auto ckpt = (run / "checkpoints" / "final.pt").string();
    auto first = run_cli({"eval", "--checkpoint", ckpt, "--episodes", "8", "--seed", "5"});
    auto second = run_cli({"eval", "--checkpoint", ckpt, "--episodes", "8", "--seed", "5"});
    ASSERT_EQ(first.code, 0) << first.err;
    EXPECT_EQ(first.out, second.out);
    EXPECT_NE(first.out.find("fallback_count          0"), std::string::npos);

    auto plot = run_cli({"plot", "--run-dir", run.string()});
    ASSERT_EQ(plot.code, 0) << plot.err;
    EXPECT_TRUE(plot.err.empty()) << plot.err;
    EXPECT_EQ(std::distance(fs::directory_iterator(run / "plots"), fs::directory_iterator{}), 4);

    auto inspect = run_cli({"inspect-repr", "--checkpoint", ckpt});
    ASSERT_EQ(inspect.code, 0) << inspect.err;
    EXPECT_NE(inspect.out.find("executable mask"), std::string::npos);

    const auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    EXPECT_LT(elapsed, 300.0);
    fs::remove_all(root);
}

TEST(Smoke, DiffusionAblationLeavesDiffusionLossEmpty) {
    const auto root = scratch_dir("ablate");
    auto r = run_cli({"train", "--config", kSmokeConfig.string(), "--ablate-diffusion", "--set", "total_timesteps=3000",
                      "--run-dir", (root / "run").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    auto table = trainer::read_metrics(root / "run" / "metrics.csv");
    int prediction_rows = 0;
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        EXPECT_FALSE(table.value(i, "loss_diffusion").has_value());
        if (table.value(i, "loss_prediction")) ++prediction_rows;
    }
    EXPECT_GT(prediction_rows, 0);
    fs::remove_all(root);
}

TEST(Smoke, ResumeContinuesToBudget) {
    const auto root = scratch_dir("resume");
    auto r = run_cli({"train", "--config", kSmokeConfig.string(), "--set", "total_timesteps=4000", "--set",
                      "checkpoint_interval=2000", "--run-dir", (root / "run").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto ckpt = root / "run" / "checkpoints" / "ckpt_2000.pt";
    ASSERT_TRUE(fs::exists(ckpt));
    auto resumed = run_cli({"train", "--config", kSmokeConfig.string(), "--resume", ckpt.string(), "--run-dir",
                            (root / "resumed").string()});
    ASSERT_EQ(resumed.code, 0) << resumed.err;
    auto table = trainer::read_metrics(root / "resumed" / "metrics.csv");
    ASSERT_FALSE(table.rows.empty());
    EXPECT_GT(*table.value(0, "t_total"), 2000.0);
    EXPECT_GE(*table.value(table.rows.size() - 1, "t_total"), 4000.0);
    EXPECT_LE(*table.value(table.rows.size() - 1, "t_total"), 4000.0 + 50.0);
    fs::remove_all(root);
}
