#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include <torch/torch.h>

namespace cd3t::agents {

struct AgentConfig {
    int obs_dim = 77;
    int n_actions = 6;
    /// Observations are projected to this width before the recurrent cell.
    int embed_dim = 32;
    int hidden_dim = 64;
    int latent_dim = 20;
    int head_hidden = 64;
};

/// MLP + GRU cell over [o_t ; a_{t-1}], shared by every agent.
class TrajectoryEncoderImpl : public torch::nn::Module {
public:
    explicit TrajectoryEncoderImpl(const AgentConfig& config);

    /// h_prev [B, H], obs [B, O], prev_action [B, A] (one-hot or zeros) -> h [B, H]
    torch::Tensor forward(const torch::Tensor& h_prev, const torch::Tensor& obs, const torch::Tensor& prev_action);

    /// Runs from a zero state over the time axis: obs [B, T, O], prev_action [B, T, A] -> [B, T, H].
    torch::Tensor unroll(const torch::Tensor& obs, const torch::Tensor& prev_action);

    int hidden_dim() const { return hidden_dim_; }

private:
    int obs_dim_;
    int n_actions_;
    int hidden_dim_;
    torch::nn::Linear embed_{nullptr};
    torch::nn::GRUCell cell_{nullptr};
};
TORCH_MODULE(TrajectoryEncoder);

/// Both decision levels: selector stream + latent head, policy stream + latent head.
class AgentNetworkImpl : public torch::nn::Module {
public:
    explicit AgentNetworkImpl(const AgentConfig& config);

    const AgentConfig& config() const { return config_; }

    torch::Tensor selector_latent(const torch::Tensor& h) { return selector_head->forward(h); }
    torch::Tensor policy_latent(const torch::Tensor& h) { return policy_head->forward(h); }

    std::vector<torch::Tensor> selector_parameters();
    std::vector<torch::Tensor> policy_parameters();

    TrajectoryEncoder selector_encoder{nullptr};
    TrajectoryEncoder policy_encoder{nullptr};
    torch::nn::Sequential selector_head{nullptr};
    torch::nn::Sequential policy_head{nullptr};

private:
    AgentConfig config_;
};
TORCH_MODULE(AgentNetwork);

/// Q[..., j] = trajectory_latent . subtask_reps[j]
torch::Tensor selector_q_values(const torch::Tensor& trajectory_latent, const torch::Tensor& subtask_reps);

/// Q[..., m] = trajectory_latent . z_a[m]
torch::Tensor policy_q_values(const torch::Tensor& trajectory_latent, const torch::Tensor& action_reps);

struct EffectiveMask {
    torch::Tensor mask;     ///< bool, same shape as the inputs
    torch::Tensor fallback; ///< bool over leading dims; true where mask AND avail was empty
};

/// subtask_mask AND avail, falling back to avail alone where the intersection is empty.
EffectiveMask effective_mask(const torch::Tensor& subtask_mask, const torch::Tensor& avail);

/// Masked entries become -infinity.
torch::Tensor mask_q_values(const torch::Tensor& q, const torch::Tensor& mask);

/// Lowest index among the maxima of finite entries; throws std::logic_error when none are finite.
int greedy_index(std::span<const double> values);

/// epsilon-greedy over the J subtasks: uniform with probability epsilon, else argmax (ties -> lowest id).
int select_subtask(std::span<const double> q_values, double epsilon, std::mt19937_64& rng);

/// epsilon-greedy over the finite entries of a masked Q vector.
int select_action(std::span<const double> masked_q, double epsilon, std::mt19937_64& rng);

std::vector<double> to_vector(const torch::Tensor& t);

}  // namespace cd3t::agents
