#pragma once

#include <functional>
#include <optional>

#include <torch/torch.h>

#include "cd3t/diffusion/noise_schedule.hpp"

namespace cd3t::diffusion {

struct RepresentationConfig {
    int n_actions = 6;
    int latent_dim = 20;
    int obs_dim = 77;
    int n_agents = 3;
    int hidden_dim = 64;
    int cond_tokens = 4;
    int attention_heads = 4;
    int residual_blocks = 2;
    int predictor_hidden = 128;
    double lambda_dr = 10.0;
    double eta_d = 0.1;
    /// false realizes the plain-MLP ablation: no denoiser, prediction loss only.
    bool use_diffusion = true;

    /// Observation followed by one-hot actions of every other agent.
    int context_dim() const { return obs_dim + (n_agents - 1) * n_actions; }
};

/// One-hot action -> latent representation z_0.
class ActionEncoderImpl : public torch::nn::Module {
public:
    ActionEncoderImpl(int n_actions, int hidden_dim, int latent_dim);

    /// `one_hot` is [..., n_actions]; rows must be exact one-hot vectors.
    torch::Tensor forward(const torch::Tensor& one_hot);

private:
    int n_actions_;
    torch::nn::Linear fc1_{nullptr};
    torch::nn::Linear fc2_{nullptr};
};
TORCH_MODULE(ActionEncoder);

/// Multi-head attention from a single query vector onto a set of condition tokens.
class CrossAttentionImpl : public torch::nn::Module {
public:
    CrossAttentionImpl(int dim, int heads);

    /// query [B, D], tokens [B, T, D] -> [B, D]
    torch::Tensor forward(const torch::Tensor& query, const torch::Tensor& tokens);

private:
    int heads_;
    int head_dim_;
    torch::nn::Linear q_{nullptr}, k_{nullptr}, v_{nullptr}, out_{nullptr};
};
TORCH_MODULE(CrossAttention);

/// Residual MLP block with a timestep shift, followed by cross-attention onto the condition.
class DenoiserBlockImpl : public torch::nn::Module {
public:
    DenoiserBlockImpl(int dim, int heads);

    torch::Tensor forward(const torch::Tensor& h, const torch::Tensor& time_embedding, const torch::Tensor& tokens);

private:
    torch::nn::LayerNorm norm1_{nullptr}, norm2_{nullptr};
    torch::nn::Linear fc1_{nullptr}, fc2_{nullptr}, time_proj_{nullptr};
    CrossAttention attention_{nullptr};
};
TORCH_MODULE(DenoiserBlock);

/// Noise predictor over (noisy latent, step, own observation, other agents' actions).
class DenoiserImpl : public torch::nn::Module {
public:
    explicit DenoiserImpl(const RepresentationConfig& config);

    /// z_k [B, d], k [B] (1-based, long), context [B, C] -> [B, d]
    torch::Tensor forward(const torch::Tensor& z_k, const torch::Tensor& k, const torch::Tensor& context);

private:
    int hidden_dim_;
    int cond_tokens_;
    int context_dim_;
    int latent_dim_;
    torch::nn::Linear input_{nullptr};
    torch::nn::Sequential time_mlp_{nullptr};
    torch::nn::Sequential cond_mlp_{nullptr};
    torch::nn::ModuleList blocks_{nullptr};
    torch::nn::LayerNorm out_norm_{nullptr};
    torch::nn::Linear output_{nullptr};
};
TORCH_MODULE(Denoiser);

/// Sinusoidal embedding of integer steps: [B] -> [B, dim].
torch::Tensor timestep_embedding(const torch::Tensor& k, int dim, const torch::TensorOptions& options);

/// Flattened per-agent samples for the representation objective.
struct RepresentationBatch {
    torch::Tensor obs;       ///< [M, N, O]
    torch::Tensor actions;   ///< [M, N] long
    torch::Tensor reward;    ///< [M]
    torch::Tensor next_obs;  ///< [M, N, O]
};

/// Per-sample diffusion randomness; fixed draws make the loss a pure function.
struct DiffusionDraw {
    torch::Tensor k;    ///< [S] long in [1, K]
    torch::Tensor eps;  ///< [S, d]
};

DiffusionDraw sample_draw(int64_t samples, int latent_dim, const NoiseSchedule& schedule, torch::Generator& generator,
                          const torch::TensorOptions& options);

struct RepresentationLossParts {
    torch::Tensor total;
    torch::Tensor prediction;
    /// Undefined when the diffusion branch is disabled.
    torch::Tensor diffusion;
};

/// Builds per-agent conditions [M, N, O + (N-1)*A] from observations and joint actions.
torch::Tensor build_contexts(const torch::Tensor& obs, const torch::Tensor& actions, int n_actions);

/// mean over rows of ||eps - eps_hat||^2
torch::Tensor noise_prediction_loss(const torch::Tensor& eps, const torch::Tensor& eps_hat);

/// mean over samples of sum_i ||obs_hat_i - obs'_i||^2 + lambda * sum_i (r_hat_i - r)^2
torch::Tensor prediction_loss(const torch::Tensor& next_obs_hat, const torch::Tensor& next_obs,
                              const torch::Tensor& reward_hat, const torch::Tensor& reward, double lambda_dr);

class RepresentationModelImpl : public torch::nn::Module {
public:
    explicit RepresentationModelImpl(const RepresentationConfig& config);

    const RepresentationConfig& config() const { return config_; }

    /// One-hot [..., A] -> z [..., d]; throws InputError on non-one-hot rows.
    torch::Tensor encode(const torch::Tensor& one_hot);
    torch::Tensor encode_ids(const torch::Tensor& action_ids);
    /// Representation matrix Z, row m = encode(one_hot(m)).
    torch::Tensor action_representations();

    torch::Tensor denoise(const torch::Tensor& z_k, const torch::Tensor& k, const torch::Tensor& context);
    torch::Tensor predict_next_obs(const torch::Tensor& z, const torch::Tensor& context);
    torch::Tensor predict_reward(const torch::Tensor& z, const torch::Tensor& context);

    /// Noise-prediction loss over (action ids [S], contexts [S, C]) with explicit draws.
    torch::Tensor diffusion_loss(const torch::Tensor& actions, const torch::Tensor& contexts, const DiffusionDraw& draw,
                                 const NoiseSchedule& schedule);
    torch::Tensor diffusion_loss(const torch::Tensor& actions, const torch::Tensor& contexts,
                                 const NoiseSchedule& schedule, torch::Generator& generator);

    /// Prediction objective over all agents of each sample.
    torch::Tensor prediction_loss(const RepresentationBatch& batch);

    /// L = L_p + eta_d * L_d. `draw` must cover M * N samples (agent-major within a sample).
    RepresentationLossParts loss(const RepresentationBatch& batch, const DiffusionDraw& draw,
                                 const NoiseSchedule& schedule);
    RepresentationLossParts loss(const RepresentationBatch& batch, const NoiseSchedule& schedule,
                                 torch::Generator& generator);

    /// Ancestral sampling from z_K ~ N(0, I); contexts [B, C] -> [B, d].
    torch::Tensor reverse_sample(const torch::Tensor& contexts, const NoiseSchedule& schedule,
                                 torch::Generator& generator);

    ActionEncoder encoder{nullptr};
    /// Null when use_diffusion is false.
    Denoiser denoiser{nullptr};
    torch::nn::Sequential obs_predictor{nullptr};
    torch::nn::Sequential reward_predictor{nullptr};

private:
    void check_context(const torch::Tensor& context) const;

    RepresentationConfig config_;
};
TORCH_MODULE(RepresentationModel);

using NoisePredictor = std::function<torch::Tensor(const torch::Tensor& z_k, int k)>;

/// Reverse process from an explicit z_K with a caller-supplied noise predictor.
torch::Tensor reverse_sample(const NoisePredictor& predictor, torch::Tensor z_K, const NoiseSchedule& schedule,
                             torch::Generator& generator);

}  // namespace cd3t::diffusion
