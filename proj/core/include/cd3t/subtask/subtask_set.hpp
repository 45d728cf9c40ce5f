#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <torch/torch.h>

#include "cd3t/diffusion/representation_model.hpp"

namespace cd3t::subtask {

using ActionSubset = std::vector<bool>;

/// Frozen decomposition of the action set into J subtasks.
struct SubtaskSet {
    int clusters = 0;
    Eigen::MatrixXd centroids;            ///< J x d
    std::vector<int> action_to_subtask;   ///< action id -> subtask id
    Eigen::MatrixXd subtask_reps;                ///< J x d, mean of member representations
    std::vector<ActionSubset> members;    ///< cluster partition, before NOOP augmentation
    std::vector<ActionSubset> masks;      ///< executable action sets, NOOP always included
    Eigen::MatrixXd action_representations;  ///< |A| x d snapshot used for clustering
    std::int64_t frozen_at = 0;

    int n_actions() const { return static_cast<int>(action_to_subtask.size()); }
    std::vector<int> member_actions(int subtask) const;
    int mask_size(int subtask) const;

    /// [J, |A|] bool tensor of the executable masks.
    torch::Tensor mask_tensor() const;
    /// [J, d] tensor of subtask_reps.
    torch::Tensor subtask_rep_tensor(const torch::TensorOptions& options) const;
};

/// Exact equality of every field, including floating-point payloads.
bool identical(const SubtaskSet& a, const SubtaskSet& b);

struct DecompositionConfig {
    int clusters = 3;
    std::int64_t update_start = 50'000;
    std::uint64_t seed = 0;
    /// Action id added to every mask; negative disables augmentation.
    int noop_action = 0;
};

/// |A| x d matrix, row m = encoder(one_hot(m)).
Eigen::MatrixXd collect_action_representations(diffusion::ActionEncoderImpl& encoder, int n_actions);

/// Mean of rows of Z assigned to `subtask`. Throws std::logic_error on an empty cluster.
Eigen::VectorXd subtask_representation(const Eigen::MatrixXd& Z, const std::vector<int>& assignments, int subtask);

/// Cluster Z, derive subtask_reps and masks. Throws UsageError when t_now < update_start.
SubtaskSet finalize_decomposition(const Eigen::MatrixXd& Z, const DecompositionConfig& config, std::int64_t t_now);

/// Write-once holder enforcing the one-shot freeze.
class Decomposition {
public:
    explicit Decomposition(DecompositionConfig config) : config_(config) {}

    const DecompositionConfig& config() const { return config_; }
    bool finalized() const { return subtasks_.has_value(); }
    bool due(std::int64_t t_now) const { return !finalized() && t_now >= config_.update_start; }

    /// Throws UsageError if already finalized or called before the threshold.
    const SubtaskSet& finalize(const Eigen::MatrixXd& Z, std::int64_t t_now);
    /// Restores a previously frozen set (checkpoint load).
    void restore(SubtaskSet subtasks);
    /// Throws UsageError before finalization.
    const SubtaskSet& get() const;

private:
    DecompositionConfig config_;
    std::optional<SubtaskSet> subtasks_;
};

std::string decomposition_to_json(const SubtaskSet& subtasks);
/// Throws LoadError on malformed input.
SubtaskSet decomposition_from_json(const std::string& text);

void write_decomposition(const SubtaskSet& subtasks, const std::filesystem::path& path);
SubtaskSet read_decomposition(const std::filesystem::path& path);

Eigen::MatrixXd to_eigen(const torch::Tensor& matrix);
torch::Tensor to_tensor(const Eigen::MatrixXd& matrix, const torch::TensorOptions& options);

}  // namespace cd3t::subtask
