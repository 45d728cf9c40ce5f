#pragma once

#include <optional>
#include <random>
#include <vector>

#include <torch/torch.h>

#include "cd3t/agents/agent_network.hpp"
#include "cd3t/env/lbf.hpp"
#include "cd3t/subtask/subtask_set.hpp"

namespace cd3t::agents {

/// Per-step outcome of decentralized execution for all agents.
struct Decision {
    std::vector<int> actions;
    /// -1 for every agent before decomposition.
    std::vector<int> subtasks;
    /// Agents whose subtask mask had no available action this step.
    int fallbacks = 0;
    /// Sum over agents of |assigned subtask mask| (|A| before decomposition).
    int mask_size_total = 0;
};

/// Rollout-side state of every agent: recurrent streams, previous actions, subtask assignments.
class HierarchicalController {
public:
    HierarchicalController(AgentNetwork network, int n_agents, int selection_interval);

    /// Action representation matrix Z [A, d]; treated as constant.
    void set_action_representations(torch::Tensor action_reps);
    /// Enables hierarchical selection; before this call agents act over the full action set.
    void set_subtasks(const subtask::SubtaskSet& subtasks);
    bool hierarchical() const { return subtask_reps_.defined(); }

    void begin_episode();

    /// `t` is the step index within the episode; subtasks are re-selected when t % interval == 0.
    Decision act(const std::vector<env::Observation>& observations, const std::vector<env::ActionMask>& available,
                 int t, double epsilon, std::mt19937_64& rng);

    const std::vector<int>& current_subtasks() const { return subtasks_; }

private:
    AgentNetwork network_;
    int n_agents_;
    int interval_;
    torch::Tensor action_reps_;
    torch::Tensor subtask_reps_;
    torch::Tensor subtask_masks_;
    torch::Tensor h_selector_;
    torch::Tensor h_policy_;
    torch::Tensor prev_actions_;
    std::vector<int> subtasks_;
};

}  // namespace cd3t::agents
