#pragma once

#include <cstdint>

#include <torch/torch.h>

#include "cd3t/data/episode.hpp"
#include "cd3t/mixing/value_networks.hpp"

namespace cd3t::mixing {

/// One-hot of the previous step's action per agent, zeros at t = 0: [B, T+1, N, A].
torch::Tensor previous_action_inputs(const data::EpisodeBatch& batch, int64_t n_actions);

/// Per-step Q over actions from the policy stream: [B, T+1, N, A].
torch::Tensor policy_utilities(ValueNetworks& nets, const data::EpisodeBatch& batch, const torch::Tensor& action_reps);

/// Per-step Q over subtasks from the selector stream: [B, T+1, N, J].
torch::Tensor selector_utilities(ValueNetworks& nets, const data::EpisodeBatch& batch, const torch::Tensor& subtask_reps);

/// Masks used for the policy bootstrap at every step: subtask mask AND availability, availability
/// alone where the step carries no subtask or the intersection is empty, all-true on padding.
/// `subtask_masks` is [J, A] bool or undefined. Returns [B, T+1, N, A] bool.
torch::Tensor bootstrap_action_masks(const data::EpisodeBatch& batch, const torch::Tensor& subtask_masks);

/// Mean squared one-step TD error over valid steps:
/// y = r + gamma (1 - done) target Q_tot(s', greedy a'), mixer inputs are Q and z of the taken action.
torch::Tensor policy_td_loss(const data::EpisodeBatch& batch, ValueNetworks& live, ValueNetworks& target,
                             const torch::Tensor& action_reps, const torch::Tensor& subtask_masks, double gamma);

/// Valid steps t with t % interval == 0 whose subtask ids are all assigned: [B, M] with M = ceil(T / interval).
torch::Tensor decision_point_mask(const data::EpisodeBatch& batch, int64_t interval);

int64_t count_decision_points(const data::EpisodeBatch& batch, int64_t interval);

/// Mean squared TD error over decision points:
/// y = sum of the window's rewards + gamma (1 - done in window) target selector Q_tot(s_{t+interval}, greedy subtasks).
torch::Tensor selector_td_loss(const data::EpisodeBatch& batch, ValueNetworks& live, ValueNetworks& target,
                               const torch::Tensor& subtask_reps, int64_t interval, double gamma);

}  // namespace cd3t::mixing
