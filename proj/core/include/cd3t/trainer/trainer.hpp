#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "cd3t/agents/controller.hpp"
#include "cd3t/data/episode.hpp"
#include "cd3t/diffusion/representation_model.hpp"
#include "cd3t/env/lbf.hpp"
#include "cd3t/mixing/value_networks.hpp"
#include "cd3t/subtask/subtask_set.hpp"
#include "cd3t/trainer/config.hpp"
#include "cd3t/trainer/replay_buffer.hpp"

namespace cd3t::trainer {

inline constexpr std::int64_t kCheckpointFormatVersion = 1;

/// Seed streams for derive_seed.
inline constexpr std::uint64_t kTrainStream = 1;
inline constexpr std::uint64_t kTestStream = 2;

struct IterationMetrics {
    std::int64_t t_total = 0;
    std::int64_t episode = 0;
    int episode_length = 0;
    double train_return = 0.0;
    double eps = 0.0;
    std::optional<double> loss_diffusion;
    std::optional<double> loss_prediction;
    std::optional<double> loss_selector;
    std::optional<double> loss_policy;
    int fallback_count = 0;
    /// The decomposition was frozen at the end of this iteration.
    bool decomposed = false;
    bool targets_synced = false;
};

struct EvalResult {
    int episodes = 0;
    double return_mean = 0.0;
    double return_std = 0.0;
    /// Fraction of episodes in which every food was consumed.
    double success_rate = 0.0;
    /// Average over agent-steps of the assigned subtask's mask size.
    double mean_subtask_mask_size = 0.0;
    int fallback_count = 0;
    std::vector<double> returns;
};

/// Read-only view of one executed step, handed to rollout observers.
struct StepView {
    int episode = 0;
    int t = 0;
    const env::GlobalState& state;
    const std::vector<env::ActionMask>& available;
    const agents::Decision& decision;
    double reward = 0.0;
    bool done = false;
};
using StepObserver = std::function<void(const StepView&)>;

/// Population mean and standard deviation.
std::pair<double, double> mean_std(const std::vector<double>& values);

/// Per-sample view of an episode batch for the representation objective (valid steps only).
diffusion::RepresentationBatch representation_batch(const data::EpisodeBatch& batch);

/// Algorithm state: networks, optimizers, buffer, decomposition, counters and RNG streams.
class Trainer {
public:
    explicit Trainer(TrainConfig config);

    /// One episode plus the updates of the active phase.
    IterationMetrics train_iteration();

    /// Greedy rollouts on layouts derived from `seed`; does not touch training state.
    EvalResult evaluate(int episodes, unsigned int seed, const StepObserver& observer = {});

    void save_checkpoint(const std::filesystem::path& path);
    /// Throws LoadError on unreadable files or a format version mismatch.
    static std::unique_ptr<Trainer> from_checkpoint(const std::filesystem::path& path);

    const TrainConfig& config() const { return config_; }
    std::int64_t t_total() const { return t_total_; }
    std::int64_t episodes() const { return episode_; }
    bool decomposed() const { return decomposition_.finalized(); }
    const subtask::SubtaskSet& subtasks() const { return decomposition_.get(); }
    /// Z used by the policy level: frozen snapshot after decomposition, live encoder output before.
    torch::Tensor action_representations();

    const ReplayBuffer& buffer() const { return buffer_; }
    mixing::ValueNetworks& live() { return live_; }
    mixing::TargetNetworks& targets() { return targets_; }
    diffusion::RepresentationModel& representation() { return representation_; }

private:
    struct EpisodeStats {
        double episode_return = 0.0;
        int fallbacks = 0;
        long mask_size_total = 0;
        int agent_steps = 0;
        bool success = false;
    };

    data::Episode run_episode(agents::HierarchicalController& controller, unsigned int layout_seed, double epsilon,
                              std::mt19937_64& rng, int episode_index, const StepObserver& observer,
                              EpisodeStats& stats);
    agents::HierarchicalController make_controller();
    void representation_update(IterationMetrics& metrics);
    void value_update(IterationMetrics& metrics);
    void restore(torch::serialize::InputArchive& archive);

    TrainConfig config_;
    env::EnvConfig env_config_;
    diffusion::NoiseSchedule schedule_;
    diffusion::RepresentationModel representation_{nullptr};
    mixing::ValueNetworks live_{nullptr};
    mixing::TargetNetworks targets_;
    std::unique_ptr<torch::optim::RMSprop> representation_optimizer_;
    std::unique_ptr<torch::optim::RMSprop> policy_optimizer_;
    std::unique_ptr<torch::optim::RMSprop> selector_optimizer_;
    ReplayBuffer buffer_;
    subtask::Decomposition decomposition_;
    std::int64_t t_total_ = 0;
    std::int64_t episode_ = 0;
    std::mt19937_64 action_rng_;
    std::mt19937_64 sample_rng_;
    torch::Generator diffusion_generator_;
};

/// Uniform-random policy over available actions on layouts derived from `seed`.
EvalResult evaluate_random(const env::EnvConfig& config, int episodes, unsigned int seed);

struct RunOptions {
    std::optional<std::filesystem::path> resume_from;
    /// Called after every training iteration and every test evaluation.
    std::function<void(const std::string&)> log;
};

struct RunResult {
    std::filesystem::path metrics_path;
    std::vector<std::filesystem::path> checkpoints;
    std::optional<std::filesystem::path> decomposition_path;
    std::vector<std::filesystem::path> traces;
    /// Test evaluations in order, keyed by t_total.
    std::vector<std::pair<std::int64_t, EvalResult>> tests;
};

/// Runs to total_timesteps inside `run_dir`, writing config.txt, metrics.csv, checkpoints/, decomposition.json
/// and traces/.
RunResult run_training(const TrainConfig& config, const std::filesystem::path& run_dir, const RunOptions& options = {});

/// Column order of metrics.csv.
const std::vector<std::string>& metrics_columns();

}  // namespace cd3t::trainer
