#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>

#include <torch/torch.h>

#include "cd3t/analysis/pca.hpp"
#include "cd3t/errors.hpp"
#include "cd3t/trainer/metrics.hpp"
#include "cli/cli.hpp"
#include "plotting/plots.hpp"

using namespace cd3t;
namespace fs = std::filesystem;

namespace {

Eigen::MatrixXd random_matrix(int rows, int cols, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n;
    Eigen::MatrixXd m(rows, cols);
    for (int i = 0; i < rows; ++i) {
        for (int k = 0; k < cols; ++k) m(i, k) = n(rng);
    }
    return m;
}

std::string read_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

fs::path scratch_dir(const std::string& name) {
    auto dir = fs::temp_directory_path() / ("cd3t_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

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

const char* kTinyConfig = R"(grid_size = 5
n_agents = 2
n_foods = 1
max_player_level = 2
max_episode_length = 20
batch_size = 4
buffer_capacity = 64
subtask_update_start = 300
eps_anneal_steps = 300
diffusion_steps = 10
latent_dim = 8
mixer_heads = 2
mixer_key_dim = 8
total_timesteps = 600
test_interval = 300
test_episodes = 2
checkpoint_interval = 300
trace_episodes = 1
seed = 2
)";

trainer::TestCurve curve(std::vector<double> t, std::vector<double> r) {
    return {std::move(t), std::move(r)};
}

}  // namespace

TEST(Pca, PlanarDataReconstructsExactly) {
    auto basis = random_matrix(2, 6, 1);
    auto coeffs = random_matrix(30, 2, 2);
    Eigen::RowVectorXd offset = random_matrix(1, 6, 3);
    Eigen::MatrixXd points = (coeffs * basis).rowwise() + offset;
    auto p = analysis::pca_project(points, 2);
    Eigen::MatrixXd rebuilt = (p.coordinates * p.components.transpose()).rowwise() + p.mean;
    EXPECT_LT((rebuilt - points).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_NEAR(p.components.col(0).norm(), 1.0, 1e-12);
    EXPECT_NEAR(p.components.col(0).dot(p.components.col(1)), 0.0, 1e-10);
    EXPECT_GE(p.variances(0), p.variances(1));
}

TEST(Pca, LeadingVarianceMatchesPowerIteration) {
    auto points = random_matrix(40, 5, 4);
    points.col(2) *= 4.0;
    auto p = analysis::pca_project(points, 2);
    Eigen::MatrixXd centered = points.rowwise() - points.colwise().mean();
    Eigen::MatrixXd cov = centered.transpose() * centered / 39.0;
    Eigen::VectorXd v = Eigen::VectorXd::Ones(5);
    for (int i = 0; i < 500; ++i) v = (cov * v).normalized();
    const double lambda = v.dot(cov * v);
    EXPECT_NEAR(p.variances(0), lambda, 1e-9);
    EXPECT_NEAR(std::abs(p.components.col(0).dot(v)), 1.0, 1e-9);
    const auto& c0 = p.coordinates.col(0);
    EXPECT_NEAR(c0.squaredNorm() / 39.0, p.variances(0), 1e-9);
    EXPECT_NEAR(c0.mean(), 0.0, 1e-10);
}

TEST(Pca, RowOrderInvariantAndOriented) {
    auto points = random_matrix(12, 4, 5);
    auto a = analysis::pca_project(points, 2);
    Eigen::MatrixXd reversed = points.colwise().reverse();
    auto b = analysis::pca_project(reversed, 2);
    EXPECT_TRUE(a.components.isApprox(b.components, 1e-9));
    EXPECT_TRUE(a.coordinates.isApprox(b.coordinates.colwise().reverse(), 1e-9));
    for (int c = 0; c < 2; ++c) {
        Eigen::Index arg = 0;
        a.components.col(c).cwiseAbs().maxCoeff(&arg);
        EXPECT_GT(a.components(arg, c), 0.0);
    }
}

TEST(Pca, DegenerateInputs) {
    Eigen::MatrixXd same = Eigen::MatrixXd::Constant(4, 3, 2.5);
    auto p = analysis::pca_project(same, 2);
    EXPECT_EQ(p.coordinates, Eigen::MatrixXd::Zero(4, 2));
    EXPECT_EQ(p.variances, Eigen::VectorXd::Zero(2));

    Eigen::MatrixXd dup(4, 2);
    dup << 1, 0, 1, 0, -1, 0, -1, 0;
    auto d = analysis::pca_project(dup, 2);
    EXPECT_DOUBLE_EQ(d.coordinates(0, 0), d.coordinates(1, 0));
    EXPECT_NEAR(std::abs(d.coordinates(0, 0)), 1.0, 1e-12);
    EXPECT_NEAR(d.variances(1), 0.0, 1e-12);

    EXPECT_THROW(analysis::pca_project(Eigen::MatrixXd::Ones(1, 3), 2), InputError);
    EXPECT_THROW(analysis::pca_project(Eigen::MatrixXd::Ones(3, 3), 4), InputError);
}

TEST(Plots, AggregateCurvesOverSharedTimesteps) {
    auto single = plots::aggregate_curves({curve({0, 10}, {1.0, 2.0})});
    EXPECT_EQ(single.seeds, 1);
    EXPECT_EQ(single.std, (std::vector<double>{0.0, 0.0}));
    EXPECT_EQ(single.mean, (std::vector<double>{1.0, 2.0}));

    auto band = plots::aggregate_curves({curve({0, 10, 20}, {1.0, 2.0, 3.0}), curve({0, 10}, {3.0, 6.0})});
    EXPECT_EQ(band.t, (std::vector<double>{0, 10}));
    EXPECT_EQ(band.mean, (std::vector<double>{2.0, 4.0}));
    EXPECT_EQ(band.std, (std::vector<double>{1.0, 2.0}));
    EXPECT_TRUE(plots::aggregate_curves({}).t.empty());
}

TEST(Plots, SubtaskCountsSumToAgents) {
    std::vector<env::TraceRecord> trace(3);
    trace[0].subtasks = {0, 0, 2};
    trace[1].subtasks = {1, 2, 2};
    trace[2].subtasks = {1, 1, 1};
    auto counts = plots::subtask_counts(trace, 3);
    ASSERT_EQ(counts.size(), 3u);
    EXPECT_EQ(counts[0], (std::vector<int>{2, 0, 1}));
    EXPECT_EQ(counts[1], (std::vector<int>{0, 1, 2}));
    EXPECT_EQ(counts[2], (std::vector<int>{0, 3, 0}));
    for (int t = 0; t < 3; ++t) {
        int sum = 0;
        for (int c : counts[static_cast<std::size_t>(t)]) sum += c;
        EXPECT_EQ(sum, 3);
    }
    trace[0].subtasks = {3, 0, 0};
    EXPECT_THROW(plots::subtask_counts(trace, 3), InputError);
    trace[0].subtasks = {-1, 0, 0};
    EXPECT_THROW(plots::subtask_counts(trace, 3), InputError);
}

TEST(Plots, RenderingIsByteStable) {
    const auto dir = scratch_dir("plots");
    auto band = plots::aggregate_curves({curve({0, 10, 20}, {0.1, 0.4, 0.5}), curve({0, 10, 20}, {0.0, 0.2, 0.7})});
    plots::plot_learning_curve(band, dir / "a.png");
    plots::plot_learning_curve(band, dir / "b.png");
    const auto bytes = read_bytes(dir / "a.png");
    EXPECT_GT(bytes.size(), 100u);
    EXPECT_EQ(bytes, read_bytes(dir / "b.png"));
    EXPECT_EQ(bytes.substr(1, 3), "PNG");
    fs::remove_all(dir);
}

TEST(Plots, MissingInputsAreSkippedWithMessages) {
    const auto dir = scratch_dir("empty_run");
    auto report = plots::emit_plots({dir}, dir / "plots");
    EXPECT_TRUE(report.written.empty());
    ASSERT_EQ(report.skipped.size(), 4u);
    EXPECT_NE(report.skipped[0].find("learning_curve.png"), std::string::npos);
    EXPECT_THROW(plots::emit_plots({}, dir), InputError);
    fs::remove_all(dir);
}

TEST(Cli, UsageErrors) {
    auto none = run_cli({});
    EXPECT_NE(none.code, 0);
    auto missing = run_cli({"train"});
    EXPECT_NE(missing.code, 0);
    EXPECT_NE((missing.out + missing.err).find("--config"), std::string::npos);
    auto unknown = run_cli({"eval", "--checkpoint", "/nonexistent.pt", "--bogus"});
    EXPECT_NE(unknown.code, 0);
    auto help = run_cli({"--help"});
    EXPECT_EQ(help.code, 0);
    EXPECT_NE(help.out.find("inspect-repr"), std::string::npos);
}

TEST(Cli, InvalidConfigKeyExitsTwo) {
    const auto dir = scratch_dir("badcfg");
    std::ofstream(dir / "bad.cfg") << "J = 3\nlearning_rate = 0.1\n";
    auto r = run_cli({"train", "--config", (dir / "bad.cfg").string(), "--run-dir", (dir / "run").string()});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("learning_rate"), std::string::npos);
    std::ofstream(dir / "good.cfg") << kTinyConfig;
    auto o = run_cli({"train", "--config", (dir / "good.cfg").string(), "--set", "J=99"});
    EXPECT_EQ(o.code, 2);
    EXPECT_NE(o.err.find("J"), std::string::npos);
    fs::remove_all(dir);
}

TEST(Cli, CorruptCheckpointExitsThree) {
    const auto dir = scratch_dir("corrupt");
    std::ofstream(dir / "bad.pt") << "garbage";
    auto r = run_cli({"eval", "--checkpoint", (dir / "bad.pt").string()});
    EXPECT_EQ(r.code, 3);
    fs::remove_all(dir);
}

TEST(Cli, TrainEvalPlotInspect) {
    torch::manual_seed(0);
    const auto dir = scratch_dir("workflow");
    std::ofstream(dir / "tiny.cfg") << kTinyConfig;
    const auto run = dir / "run";
    auto t = run_cli({"train", "--config", (dir / "tiny.cfg").string(), "--run-dir", run.string()});
    ASSERT_EQ(t.code, 0) << t.err;
    EXPECT_NE(t.out.find("final test return"), std::string::npos);
    ASSERT_TRUE(fs::exists(run / "checkpoints" / "final.pt"));

    const auto ckpt = (run / "checkpoints" / "final.pt").string();
    auto e = run_cli({"eval", "--checkpoint", ckpt, "--episodes", "3", "--random-baseline"});
    ASSERT_EQ(e.code, 0) << e.err;
    EXPECT_NE(e.out.find("return_mean"), std::string::npos);
    EXPECT_NE(e.out.find("random_return_mean"), std::string::npos);
    EXPECT_NE(e.out.find("fallback_count          0"), std::string::npos);

    auto p = run_cli({"plot", "--run-dir", run.string()});
    ASSERT_EQ(p.code, 0) << p.err;
    EXPECT_TRUE(p.err.empty()) << p.err;
    for (const char* name : {"learning_curve.png", "pca.png", "subtask_trace.png", "mask_sizes.png"}) {
        EXPECT_TRUE(fs::exists(run / "plots" / name)) << name;
    }

    auto i = run_cli({"inspect-repr", "--checkpoint", ckpt});
    ASSERT_EQ(i.code, 0) << i.err;
    EXPECT_NE(i.out.find("pairwise distances"), std::string::npos);
    EXPECT_NE(i.out.find("executable mask"), std::string::npos);
    EXPECT_NE(i.out.find("NOOP"), std::string::npos);

    auto early = run_cli({"inspect-repr", "--checkpoint", (run / "checkpoints" / "ckpt_300.pt").string()});
    ASSERT_EQ(early.code, 0) << early.err;
    fs::remove_all(dir);
}
