#include "cd3t/mixing/td_loss.hpp"

#include "cd3t/errors.hpp"

namespace cd3t::mixing {

namespace {

/// obs [B, T+1, N, O], prev [B, T+1, N, A] -> hidden [B, T+1, N, H]
torch::Tensor unroll_agents(agents::TrajectoryEncoder& encoder, const torch::Tensor& obs, const torch::Tensor& prev) {
    const auto b = obs.size(0);
    const auto steps = obs.size(1);
    const auto n = obs.size(2);
    auto flat_obs = obs.permute({0, 2, 1, 3}).reshape({b * n, steps, obs.size(3)});
    auto flat_prev = prev.permute({0, 2, 1, 3}).reshape({b * n, steps, prev.size(3)});
    auto h = encoder->unroll(flat_obs, flat_prev);
    return h.view({b, n, steps, h.size(-1)}).permute({0, 2, 1, 3});
}

torch::Tensor gather_last(const torch::Tensor& values, const torch::Tensor& index) {
    return values.gather(-1, index.unsqueeze(-1)).squeeze(-1);
}

/// rows [K, d] indexed by ids [...] -> [..., d]
torch::Tensor lookup_rows(const torch::Tensor& rows, const torch::Tensor& ids) {
    auto shape = ids.sizes().vec();
    shape.push_back(rows.size(1));
    return rows.index_select(0, ids.reshape({-1})).view(shape);
}

void check_batch(const data::EpisodeBatch& batch) {
    if (!batch.reward.defined() || batch.batch_size() == 0 || batch.max_length() == 0) {
        throw InputError("TD loss: empty batch");
    }
}

}  // namespace

torch::Tensor previous_action_inputs(const data::EpisodeBatch& batch, int64_t n_actions) {
    auto one_hot = torch::one_hot(batch.actions, n_actions).to(batch.obs.scalar_type());
    auto first = torch::zeros_like(one_hot.slice(1, 0, 1));
    return torch::cat({first, one_hot}, 1);
}

torch::Tensor policy_utilities(ValueNetworks& nets, const data::EpisodeBatch& batch, const torch::Tensor& action_reps) {
    auto prev = previous_action_inputs(batch, nets->config().agent.n_actions);
    auto h = unroll_agents(nets->agent->policy_encoder, batch.obs, prev);
    return agents::policy_q_values(nets->agent->policy_latent(h), action_reps);
}

torch::Tensor selector_utilities(ValueNetworks& nets, const data::EpisodeBatch& batch, const torch::Tensor& subtask_reps) {
    auto prev = previous_action_inputs(batch, nets->config().agent.n_actions);
    auto h = unroll_agents(nets->agent->selector_encoder, batch.obs, prev);
    return agents::selector_q_values(nets->agent->selector_latent(h), subtask_reps);
}

torch::Tensor bootstrap_action_masks(const data::EpisodeBatch& batch, const torch::Tensor& subtask_masks) {
    auto avail = batch.avail.to(torch::kBool);
    torch::Tensor mask = avail;
    if (subtask_masks.defined()) {
        if (subtask_masks.dim() != 2 || subtask_masks.size(1) != avail.size(-1)) {
            throw InputError("subtask masks must be [J, n_actions]");
        }
        auto assigned = batch.subtasks >= 0;
        auto per_step = lookup_rows(subtask_masks.to(torch::kBool), batch.subtasks.clamp_min(0));
        auto eff = agents::effective_mask(per_step, avail).mask;
        mask = torch::where(assigned.unsqueeze(-1), eff, avail);
    }
    return mask | ~mask.any(-1, true);
}

torch::Tensor policy_td_loss(const data::EpisodeBatch& batch, ValueNetworks& live, ValueNetworks& target,
                             const torch::Tensor& action_reps, const torch::Tensor& subtask_masks, double gamma) {
    check_batch(batch);
    auto valid_count = batch.valid.sum();
    if (valid_count.item<double>() <= 0.0) throw InputError("TD loss: batch has no valid steps");
    const auto steps = batch.max_length();

    auto q = policy_utilities(live, batch, action_reps).slice(1, 0, steps);
    auto chosen = gather_last(q, batch.actions);
    auto q_tot = live->policy_mixer->forward(chosen, lookup_rows(action_reps, batch.actions),
                                             batch.state.slice(1, 0, steps));

    torch::Tensor y;
    {
        torch::NoGradGuard no_grad;
        auto q_next = policy_utilities(target, batch, action_reps).slice(1, 1, steps + 1);
        auto masks = bootstrap_action_masks(batch, subtask_masks).slice(1, 1, steps + 1);
        auto greedy = agents::mask_q_values(q_next, masks).argmax(-1);
        auto next_tot = target->policy_mixer->forward(gather_last(q_next, greedy), lookup_rows(action_reps, greedy),
                                                      batch.state.slice(1, 1, steps + 1));
        y = batch.reward + gamma * (1.0 - batch.done) * next_tot;
    }
    auto td = torch::where(batch.valid > 0, y - q_tot, torch::zeros_like(q_tot));
    return td.pow(2).sum() / valid_count;
}

torch::Tensor decision_point_mask(const data::EpisodeBatch& batch, int64_t interval) {
    check_batch(batch);
    if (interval < 1) throw ConfigError("decision interval must be >= 1");
    auto idx = torch::arange(0, batch.max_length(), interval, torch::kLong);
    auto valid = batch.valid.index_select(1, idx) > 0;
    auto labeled = (batch.subtasks.index_select(1, idx) >= 0).all(-1);
    return valid & labeled;
}

int64_t count_decision_points(const data::EpisodeBatch& batch, int64_t interval) {
    return decision_point_mask(batch, interval).sum().item<int64_t>();
}

torch::Tensor selector_td_loss(const data::EpisodeBatch& batch, ValueNetworks& live, ValueNetworks& target,
                               const torch::Tensor& subtask_reps, int64_t interval, double gamma) {
    auto decisions = decision_point_mask(batch, interval);
    const auto count = decisions.sum().item<int64_t>();
    if (count == 0) throw InputError("selector TD loss: batch has no decision points");
    const auto b = batch.batch_size();
    const auto steps = batch.max_length();
    auto idx = torch::arange(0, steps, interval, torch::kLong);
    const auto windows = idx.size(0);
    auto next_idx = (idx + interval).clamp_max(steps);

    auto q = selector_utilities(live, batch, subtask_reps).index_select(1, idx);
    auto assigned = batch.subtasks.index_select(1, idx).clamp_min(0);
    auto q_tot = live->selector_mixer->forward(gather_last(q, assigned), lookup_rows(subtask_reps, assigned),
                                               batch.state.index_select(1, idx));

    torch::Tensor y;
    {
        torch::NoGradGuard no_grad;
        const auto padded = windows * interval - steps;
        auto window_reward = torch::constant_pad_nd(batch.reward, {0, padded}).view({b, windows, interval}).sum(-1);
        auto window_done = std::get<0>(torch::constant_pad_nd(batch.done, {0, padded}).view({b, windows, interval}).max(-1));
        auto q_next = selector_utilities(target, batch, subtask_reps).index_select(1, next_idx);
        auto greedy = q_next.argmax(-1);
        auto next_tot = target->selector_mixer->forward(gather_last(q_next, greedy), lookup_rows(subtask_reps, greedy),
                                                        batch.state.index_select(1, next_idx));
        y = window_reward + gamma * (1.0 - window_done) * next_tot;
    }
    auto td = torch::where(decisions, y - q_tot, torch::zeros_like(q_tot));
    return td.pow(2).sum() / static_cast<double>(count);
}

}  // namespace cd3t::mixing
