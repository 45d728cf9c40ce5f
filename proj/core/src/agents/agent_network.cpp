#include "cd3t/agents/agent_network.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "cd3t/errors.hpp"

namespace cd3t::agents {

TrajectoryEncoderImpl::TrajectoryEncoderImpl(const AgentConfig& config)
    : obs_dim_(config.obs_dim), n_actions_(config.n_actions), hidden_dim_(config.hidden_dim) {
    embed_ = register_module("embed", torch::nn::Linear(config.obs_dim + config.n_actions, config.embed_dim));
    cell_ = register_module("gru", torch::nn::GRUCell(config.embed_dim, config.hidden_dim));
}

torch::Tensor TrajectoryEncoderImpl::forward(const torch::Tensor& h_prev, const torch::Tensor& obs,
                                             const torch::Tensor& prev_action) {
    if (obs.dim() != 2 || obs.size(1) != obs_dim_) throw InputError("trajectory encoder: obs must be [B, obs_dim]");
    if (prev_action.dim() != 2 || prev_action.size(1) != n_actions_ || prev_action.size(0) != obs.size(0)) {
        throw InputError("trajectory encoder: previous action must be [B, n_actions]");
    }
    if (h_prev.dim() != 2 || h_prev.size(0) != obs.size(0) || h_prev.size(1) != hidden_dim_) {
        throw InputError("trajectory encoder: hidden state must be [B, " + std::to_string(hidden_dim_) + "]");
    }
    return cell_(torch::relu(embed_(torch::cat({obs, prev_action}, -1))), h_prev);
}

torch::Tensor TrajectoryEncoderImpl::unroll(const torch::Tensor& obs, const torch::Tensor& prev_action) {
    if (obs.dim() != 3 || prev_action.dim() != 3 || obs.size(1) != prev_action.size(1)) {
        throw InputError("trajectory encoder: unroll expects [B, T, .] inputs");
    }
    const auto batch = obs.size(0);
    const auto steps = obs.size(1);
    auto embedded = torch::relu(embed_(torch::cat({obs, prev_action}, -1)));
    auto h = torch::zeros({batch, hidden_dim_}, obs.options());
    std::vector<torch::Tensor> hs;
    hs.reserve(static_cast<std::size_t>(steps));
    for (int64_t t = 0; t < steps; ++t) {
        h = cell_(embedded.select(1, t), h);
        hs.push_back(h);
    }
    return torch::stack(hs, 1);
}

namespace {

torch::nn::Sequential make_head(const AgentConfig& c) {
    return torch::nn::Sequential(torch::nn::Linear(c.hidden_dim, c.head_hidden), torch::nn::ReLU(),
                                 torch::nn::Linear(c.head_hidden, c.latent_dim));
}

}  // namespace

AgentNetworkImpl::AgentNetworkImpl(const AgentConfig& config) : config_(config) {
    selector_encoder = register_module("selector_encoder", TrajectoryEncoder(config));
    policy_encoder = register_module("policy_encoder", TrajectoryEncoder(config));
    selector_head = register_module("selector_head", make_head(config));
    policy_head = register_module("policy_head", make_head(config));
}

std::vector<torch::Tensor> AgentNetworkImpl::selector_parameters() {
    auto out = selector_encoder->parameters();
    auto head = selector_head->parameters();
    out.insert(out.end(), head.begin(), head.end());
    return out;
}

std::vector<torch::Tensor> AgentNetworkImpl::policy_parameters() {
    auto out = policy_encoder->parameters();
    auto head = policy_head->parameters();
    out.insert(out.end(), head.begin(), head.end());
    return out;
}

torch::Tensor selector_q_values(const torch::Tensor& trajectory_latent, const torch::Tensor& subtask_reps) {
    if (subtask_reps.dim() != 2 || trajectory_latent.size(-1) != subtask_reps.size(1)) throw InputError("selector Q: latent sizes differ");
    return torch::matmul(trajectory_latent, subtask_reps.t());
}

torch::Tensor policy_q_values(const torch::Tensor& trajectory_latent, const torch::Tensor& action_reps) {
    if (action_reps.dim() != 2 || trajectory_latent.size(-1) != action_reps.size(1)) {
        throw InputError("policy Q: latent sizes differ");
    }
    return torch::matmul(trajectory_latent, action_reps.t());
}

EffectiveMask effective_mask(const torch::Tensor& subtask_mask, const torch::Tensor& avail) {
    if (subtask_mask.sizes() != avail.sizes()) throw InputError("mask shapes differ");
    auto both = subtask_mask.to(torch::kBool) & avail.to(torch::kBool);
    auto empty = ~both.any(-1);
    return {torch::where(empty.unsqueeze(-1), avail.to(torch::kBool), both), empty};
}

torch::Tensor mask_q_values(const torch::Tensor& q, const torch::Tensor& mask) {
    return q.masked_fill(~mask.to(torch::kBool), -std::numeric_limits<double>::infinity());
}

int greedy_index(std::span<const double> values) {
    int best = -1;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i])) continue;
        if (best < 0 || values[i] > values[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
    }
    if (best < 0) throw std::logic_error("no finite entry to select from");
    return best;
}

int select_subtask(std::span<const double> q_values, double epsilon, std::mt19937_64& rng) {
    if (q_values.empty()) throw InputError("no subtasks to select from");
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    if (coin(rng) < epsilon) {
        std::uniform_int_distribution<int> pick(0, static_cast<int>(q_values.size()) - 1);
        return pick(rng);
    }
    return greedy_index(q_values);
}

int select_action(std::span<const double> masked_q, double epsilon, std::mt19937_64& rng) {
    std::vector<int> finite;
    for (std::size_t i = 0; i < masked_q.size(); ++i) {
        if (std::isfinite(masked_q[i])) finite.push_back(static_cast<int>(i));
    }
    if (finite.empty()) throw std::logic_error("every action is masked");
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    if (coin(rng) < epsilon) {
        std::uniform_int_distribution<std::size_t> pick(0, finite.size() - 1);
        return finite[pick(rng)];
    }
    return greedy_index(masked_q);
}

std::vector<double> to_vector(const torch::Tensor& t) {
    auto flat = t.detach().to(torch::kFloat64).contiguous().reshape({-1});
    return {flat.data_ptr<double>(), flat.data_ptr<double>() + flat.numel()};
}

}  // namespace cd3t::agents
