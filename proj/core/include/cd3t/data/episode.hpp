#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include <torch/torch.h>

namespace cd3t::data {

/// One complete trajectory, stored flat. Step-indexed arrays hold length + 1 entries so
/// that the successor of the final transition is available.
struct Episode {
    int n_agents = 0;
    int obs_dim = 0;
    int state_dim = 0;
    int n_actions = 0;
    int length = 0;

    std::vector<float> obs;          ///< (length+1) * n_agents * obs_dim
    std::vector<float> state;        ///< (length+1) * state_dim
    std::vector<std::uint8_t> avail; ///< (length+1) * n_agents * n_actions
    std::vector<int> subtasks;       ///< (length+1) * n_agents, -1 when unassigned
    std::vector<int> actions;        ///< length * n_agents
    std::vector<float> reward;       ///< length
    std::vector<std::uint8_t> done;  ///< length

    double episode_return() const;
    /// Throws InputError when array sizes disagree with the declared dimensions.
    void validate() const;
};

/// Padded batch of episodes; padded steps carry valid == 0.
struct EpisodeBatch {
    torch::Tensor obs;       ///< [B, T+1, N, O]
    torch::Tensor state;     ///< [B, T+1, S]
    torch::Tensor avail;     ///< [B, T+1, N, A] bool
    torch::Tensor subtasks;  ///< [B, T+1, N] long
    torch::Tensor actions;   ///< [B, T, N] long
    torch::Tensor reward;    ///< [B, T]
    torch::Tensor done;      ///< [B, T]
    torch::Tensor valid;     ///< [B, T]

    int64_t batch_size() const { return reward.size(0); }
    int64_t max_length() const { return reward.size(1); }
    int64_t n_agents() const { return actions.size(2); }

    /// Floating tensors converted to `dtype`; integer and bool tensors unchanged.
    EpisodeBatch to(torch::ScalarType dtype) const;
    /// Appends `extra` all-padding steps to every episode.
    EpisodeBatch padded(int64_t extra) const;
};

/// Stacks episodes, padding to the longest. `min_length` forces extra padding.
EpisodeBatch collate(std::span<const std::shared_ptr<const Episode>> episodes, int64_t min_length = 0);

}  // namespace cd3t::data
