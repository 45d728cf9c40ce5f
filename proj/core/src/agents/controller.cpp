#include "cd3t/agents/controller.hpp"

#include "cd3t/errors.hpp"

namespace cd3t::agents {

HierarchicalController::HierarchicalController(AgentNetwork network, int n_agents, int selection_interval)
    : network_(std::move(network)), n_agents_(n_agents), interval_(selection_interval) {
    if (selection_interval < 1) throw ConfigError("subtask selection interval must be >= 1");
    begin_episode();
}

void HierarchicalController::set_action_representations(torch::Tensor action_reps) {
    action_reps_ = action_reps.detach().to(network_->parameters().front().options());
}

void HierarchicalController::set_subtasks(const subtask::SubtaskSet& subtasks) {
    auto opts = network_->parameters().front().options();
    subtask_reps_ = subtasks.subtask_rep_tensor(opts);
    subtask_masks_ = subtasks.mask_tensor();
}

void HierarchicalController::begin_episode() {
    auto opts = network_->parameters().front().options();
    const auto& cfg = network_->config();
    h_selector_ = torch::zeros({n_agents_, cfg.hidden_dim}, opts);
    h_policy_ = torch::zeros({n_agents_, cfg.hidden_dim}, opts);
    prev_actions_ = torch::zeros({n_agents_, cfg.n_actions}, opts);
    subtasks_.assign(static_cast<std::size_t>(n_agents_), -1);
}

Decision HierarchicalController::act(const std::vector<env::Observation>& observations,
                                     const std::vector<env::ActionMask>& available, int t, double epsilon,
                                     std::mt19937_64& rng) {
    if (static_cast<int>(observations.size()) != n_agents_ || static_cast<int>(available.size()) != n_agents_) {
        throw InputError("controller: one observation and availability mask per agent expected");
    }
    if (!action_reps_.defined()) throw UsageError("controller: action representations not set");
    torch::NoGradGuard no_grad;
    const auto& cfg = network_->config();
    auto opts = network_->parameters().front().options();

    auto obs = torch::empty({n_agents_, cfg.obs_dim}, torch::kFloat32);
    auto avail = torch::zeros({n_agents_, cfg.n_actions}, torch::kBool);
    {
        auto o = obs.accessor<float, 2>();
        auto a = avail.accessor<bool, 2>();
        for (int i = 0; i < n_agents_; ++i) {
            for (int k = 0; k < cfg.obs_dim; ++k) o[i][k] = observations[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
            for (int m = 0; m < cfg.n_actions; ++m) a[i][m] = available[static_cast<std::size_t>(i)][static_cast<std::size_t>(m)];
        }
    }
    obs = obs.to(opts);

    h_selector_ = network_->selector_encoder(h_selector_, obs, prev_actions_);
    h_policy_ = network_->policy_encoder(h_policy_, obs, prev_actions_);

    Decision decision;
    decision.actions.resize(static_cast<std::size_t>(n_agents_));

    torch::Tensor mask = avail;
    if (hierarchical()) {
        if (t % interval_ == 0) {
            auto q_sel = selector_q_values(network_->selector_latent(h_selector_), subtask_reps_);
            for (int i = 0; i < n_agents_; ++i) {
                subtasks_[static_cast<std::size_t>(i)] = select_subtask(to_vector(q_sel[i]), epsilon, rng);
            }
        }
        auto ids = torch::tensor(std::vector<int64_t>(subtasks_.begin(), subtasks_.end()), torch::kLong);
        auto eff = effective_mask(subtask_masks_.index_select(0, ids), avail);
        mask = eff.mask;
        decision.fallbacks = static_cast<int>(eff.fallback.sum().item<int64_t>());
        for (int i = 0; i < n_agents_; ++i) {
            decision.mask_size_total += static_cast<int>(subtask_masks_[subtasks_[static_cast<std::size_t>(i)]].sum().item<int64_t>());
        }
    } else {
        decision.mask_size_total = n_agents_ * cfg.n_actions;
    }

    auto q = mask_q_values(policy_q_values(network_->policy_latent(h_policy_), action_reps_), mask);
    for (int i = 0; i < n_agents_; ++i) {
        decision.actions[static_cast<std::size_t>(i)] = select_action(to_vector(q[i]), epsilon, rng);
    }
    decision.subtasks = subtasks_;

    prev_actions_ = torch::one_hot(torch::tensor(std::vector<int64_t>(decision.actions.begin(), decision.actions.end()),
                                                 torch::kLong),
                                   cfg.n_actions)
                        .to(opts);
    return decision;
}

}  // namespace cd3t::agents
