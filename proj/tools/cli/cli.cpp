#include "cli.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cd3t/analysis/pca.hpp"
#include "cd3t/errors.hpp"
#include "cd3t/trainer/trainer.hpp"
#include "plotting/plots.hpp"

namespace cd3t::cli {

namespace fs = std::filesystem;

namespace {

std::string timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    localtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y%m%d-%H%M%S", &tm);
    return buf;
}

struct TrainArgs {
    std::string config;
    std::optional<unsigned int> seed;
    bool ablate_diffusion = false;
    bool ablate_attention = false;
    std::string resume;
    std::string runs_root = "runs";
    std::string run_dir;
    std::vector<std::string> overrides;
};

struct EvalArgs {
    std::string checkpoint;
    int episodes = 32;
    unsigned int seed = 0;
    bool random_baseline = false;
};

struct PlotArgs {
    std::vector<std::string> run_dirs;
    std::string out;
};

struct InspectArgs {
    std::string checkpoint;
};

int train(const TrainArgs& args, std::ostream& out) {
    auto config = trainer::load_config(args.config);
    for (const auto& item : args.overrides) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw ConfigError("override '" + item + "' is not key=value");
        trainer::set_field(config, item.substr(0, eq), item.substr(eq + 1));
    }
    if (args.seed) config.seed = *args.seed;
    if (args.ablate_diffusion) config.use_diffusion = false;
    if (args.ablate_attention) config.mixer = "monotonic_hypernet";
    config.validate();

    fs::path run_dir = args.run_dir.empty()
                           ? fs::path(args.runs_root) / (timestamp() + "_seed" + std::to_string(config.seed))
                           : fs::path(args.run_dir);
    trainer::RunOptions options;
    if (!args.resume.empty()) options.resume_from = fs::path(args.resume);
    options.log = [&out](const std::string& line) { out << line << std::endl; };
    out << "run directory: " << run_dir.string() << std::endl;
    auto result = trainer::run_training(config, run_dir, options);
    if (!result.tests.empty()) {
        const auto& [t, eval] = result.tests.back();
        out << "final test return " << eval.return_mean << " +/- " << eval.return_std << " at t=" << t << '\n';
    }
    out << "metrics: " << result.metrics_path.string() << '\n';
    return 0;
}

int evaluate(const EvalArgs& args, std::ostream& out) {
    auto trainer = trainer::Trainer::from_checkpoint(args.checkpoint);
    auto result = trainer->evaluate(args.episodes, args.seed);
    out << std::setprecision(6);
    out << "episodes                " << result.episodes << '\n'
        << "return_mean             " << result.return_mean << '\n'
        << "return_std              " << result.return_std << '\n'
        << "success_rate            " << result.success_rate << '\n'
        << "mean_subtask_mask_size  " << result.mean_subtask_mask_size << '\n'
        << "fallback_count          " << result.fallback_count << '\n';
    if (args.random_baseline) {
        auto random = trainer::evaluate_random(trainer->config().env_config(), args.episodes, args.seed);
        out << "random_return_mean      " << random.return_mean << '\n'
            << "random_success_rate     " << random.success_rate << '\n';
    }
    return 0;
}

int plot(const PlotArgs& args, std::ostream& out, std::ostream& err) {
    std::vector<fs::path> dirs(args.run_dirs.begin(), args.run_dirs.end());
    const fs::path out_dir = args.out.empty() ? dirs.front() / "plots" : fs::path(args.out);
    auto report = plots::emit_plots(dirs, out_dir);
    for (const auto& p : report.written) out << "wrote " << p.string() << '\n';
    for (const auto& s : report.skipped) err << s << '\n';
    return 0;
}

int inspect(const InspectArgs& args, std::ostream& out) {
    auto trainer = trainer::Trainer::from_checkpoint(args.checkpoint);
    const auto z = subtask::to_eigen(trainer->action_representations().to(torch::kFloat64));
    const auto n = static_cast<int>(z.rows());
    out << "pairwise distances between action representations\n" << std::setw(8) << "";
    for (int j = 0; j < n; ++j) out << std::setw(9) << env::action_name(j);
    out << '\n' << std::fixed << std::setprecision(4);
    for (int i = 0; i < n; ++i) {
        out << std::setw(8) << env::action_name(i);
        for (int j = 0; j < n; ++j) out << std::setw(9) << (z.row(i) - z.row(j)).norm();
        out << '\n';
    }
    const auto projection = analysis::pca_project(z, 2);
    out << "\n" << std::setw(8) << "action" << std::setw(9) << "subtask" << std::setw(10) << "pc1" << std::setw(10)
        << "pc2" << '\n';
    for (int i = 0; i < n; ++i) {
        const std::string subtask = trainer->decomposed()
                                        ? std::to_string(trainer->subtasks().action_to_subtask[static_cast<std::size_t>(i)])
                                        : std::string("-");
        out << std::setw(8) << env::action_name(i) << std::setw(9) << subtask << std::setw(10)
            << projection.coordinates(i, 0) << std::setw(10) << projection.coordinates(i, 1) << '\n';
    }
    if (trainer->decomposed()) {
        const auto& set = trainer->subtasks();
        out << "\nsubtask  members              executable mask\n";
        for (int j = 0; j < set.clusters; ++j) {
            std::string members, mask;
            for (int a : set.member_actions(j)) members += std::string(members.empty() ? "" : " ") + std::string(env::action_name(a));
            for (int a = 0; a < set.n_actions(); ++a) {
                if (set.masks[static_cast<std::size_t>(j)][static_cast<std::size_t>(a)]) {
                    mask += std::string(mask.empty() ? "" : " ") + std::string(env::action_name(a));
                }
            }
            out << std::left << std::setw(9) << j << std::setw(21) << members << mask << std::right << '\n';
        }
    } else {
        out << "\nno decomposition yet (checkpoint taken before the subtask freeze)\n";
    }
    return 0;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Hierarchical multi-agent Q-learning with diffusion action representations on level-based foraging",
                 "cd3t"};
    app.failure_message(CLI::FailureMessage::help);
    app.require_subcommand(1);

    TrainArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "Train one run and write its artifacts");
    train_cmd->add_option("--config", train_args.config, "Flat key = value config file")->required()->check(CLI::ExistingFile);
    train_cmd->add_option("--seed", train_args.seed, "Overrides the config seed");
    auto* ablate_d = train_cmd->add_flag("--ablate-diffusion", train_args.ablate_diffusion,
                                         "Plain MLP action encoder trained on the prediction loss only");
    auto* ablate_a = train_cmd->add_flag("--ablate-attention", train_args.ablate_attention,
                                         "Replace both attention mixers with a monotonic hypernetwork mixer");
    ablate_d->excludes(ablate_a);
    train_cmd->add_option("--resume", train_args.resume, "Continue from a checkpoint")->check(CLI::ExistingFile);
    train_cmd->add_option("--runs-root", train_args.runs_root, "Parent of the timestamped run directory");
    train_cmd->add_option("--run-dir", train_args.run_dir, "Explicit run directory");
    train_cmd->add_option("--set", train_args.overrides, "Config override key=value (repeatable)");

    EvalArgs eval_args;
    auto* eval_cmd = app.add_subcommand("eval", "Greedy evaluation of a checkpoint");
    eval_cmd->add_option("--checkpoint", eval_args.checkpoint)->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--episodes", eval_args.episodes)->check(CLI::PositiveNumber);
    eval_cmd->add_option("--seed", eval_args.seed);
    eval_cmd->add_flag("--random-baseline", eval_args.random_baseline, "Also report a uniform-random policy");

    PlotArgs plot_args;
    auto* plot_cmd = app.add_subcommand("plot", "Render learning curve, PCA, subtask trace and mask-size plots");
    plot_cmd->add_option("--run-dir", plot_args.run_dirs, "Run directory (repeat for one curve over several seeds)")
        ->required()
        ->check(CLI::ExistingDirectory);
    plot_cmd->add_option("--out", plot_args.out, "Output directory (default: <first run dir>/plots)");

    InspectArgs inspect_args;
    auto* inspect_cmd = app.add_subcommand("inspect-repr", "Print action representation distances and clusters");
    inspect_cmd->add_option("--checkpoint", inspect_args.checkpoint)->required()->check(CLI::ExistingFile);

    try {
        std::vector<std::string> args;
        for (int i = argc - 1; i > 0; --i) args.emplace_back(argv[i]);
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }

    try {
        if (*train_cmd) return train(train_args, out);
        if (*eval_cmd) return evaluate(eval_args, out);
        if (*plot_cmd) return plot(plot_args, out, err);
        if (*inspect_cmd) return inspect(inspect_args, out);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return 2;
    } catch (const LoadError& e) {
        err << "load error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}

}  // namespace cd3t::cli
