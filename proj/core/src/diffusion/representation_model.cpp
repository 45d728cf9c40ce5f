#include "cd3t/diffusion/representation_model.hpp"

#include <cmath>
#include <string>

#include "cd3t/errors.hpp"

namespace cd3t::diffusion {

namespace idx = torch::indexing;

ActionEncoderImpl::ActionEncoderImpl(int n_actions, int hidden_dim, int latent_dim) : n_actions_(n_actions) {
    fc1_ = register_module("fc1", torch::nn::Linear(n_actions, hidden_dim));
    fc2_ = register_module("fc2", torch::nn::Linear(hidden_dim, latent_dim));
}

torch::Tensor ActionEncoderImpl::forward(const torch::Tensor& one_hot) {
    if (one_hot.dim() < 1 || one_hot.size(-1) != n_actions_) {
        throw InputError("action encoder expects one-hot vectors of length " + std::to_string(n_actions_));
    }
    const bool binary = ((one_hot == 0) | (one_hot == 1)).all().item<bool>();
    const bool single = (one_hot.sum(-1) == 1).all().item<bool>();
    if (!binary || !single) throw InputError("action encoder input is not one-hot");
    return fc2_(torch::silu(fc1_(one_hot)));
}

CrossAttentionImpl::CrossAttentionImpl(int dim, int heads) : heads_(heads), head_dim_(dim / heads) {
    if (heads < 1 || dim % heads != 0) throw ConfigError("attention dim must be divisible by head count");
    q_ = register_module("q", torch::nn::Linear(dim, dim));
    k_ = register_module("k", torch::nn::Linear(dim, dim));
    v_ = register_module("v", torch::nn::Linear(dim, dim));
    out_ = register_module("out", torch::nn::Linear(dim, dim));
}

torch::Tensor CrossAttentionImpl::forward(const torch::Tensor& query, const torch::Tensor& tokens) {
    const auto batch = query.size(0);
    const auto n_tokens = tokens.size(1);
    auto q = q_(query).view({batch, heads_, 1, head_dim_});
    auto k = k_(tokens).view({batch, n_tokens, heads_, head_dim_}).transpose(1, 2);
    auto v = v_(tokens).view({batch, n_tokens, heads_, head_dim_}).transpose(1, 2);
    auto scores = torch::matmul(q, k.transpose(-1, -2)) / std::sqrt(static_cast<double>(head_dim_));
    auto attended = torch::matmul(torch::softmax(scores, -1), v);  // [B, H, 1, hd]
    return out_(attended.reshape({batch, heads_ * head_dim_}));
}

DenoiserBlockImpl::DenoiserBlockImpl(int dim, int heads) {
    norm1_ = register_module("norm1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
    norm2_ = register_module("norm2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
    fc1_ = register_module("fc1", torch::nn::Linear(dim, 2 * dim));
    fc2_ = register_module("fc2", torch::nn::Linear(2 * dim, dim));
    time_proj_ = register_module("time_proj", torch::nn::Linear(dim, 2 * dim));
    attention_ = register_module("attention", CrossAttention(dim, heads));
}

torch::Tensor DenoiserBlockImpl::forward(const torch::Tensor& h, const torch::Tensor& time_embedding,
                                         const torch::Tensor& tokens) {
    auto x = h + fc2_(torch::silu(fc1_(norm1_(h)) + time_proj_(time_embedding)));
    return x + attention_(norm2_(x), tokens);
}

torch::Tensor timestep_embedding(const torch::Tensor& k, int dim, const torch::TensorOptions& options) {
    const int half = dim / 2;
    auto freqs = torch::exp(-std::log(10000.0) * torch::arange(half, options) / static_cast<double>(half));
    auto args = k.to(options).unsqueeze(-1) * freqs.unsqueeze(0);
    auto emb = torch::cat({torch::sin(args), torch::cos(args)}, -1);
    if (dim % 2 == 1) emb = torch::cat({emb, torch::zeros({k.size(0), 1}, options)}, -1);
    return emb;
}

DenoiserImpl::DenoiserImpl(const RepresentationConfig& config)
    : hidden_dim_(config.hidden_dim),
      cond_tokens_(config.cond_tokens),
      context_dim_(config.context_dim()),
      latent_dim_(config.latent_dim) {
    const int h = config.hidden_dim;
    input_ = register_module("input", torch::nn::Linear(config.latent_dim, h));
    time_mlp_ = register_module("time_mlp", torch::nn::Sequential(torch::nn::Linear(h, h), torch::nn::SiLU(),
                                                                  torch::nn::Linear(h, h)));
    cond_mlp_ = register_module("cond_mlp",
                                torch::nn::Sequential(torch::nn::Linear(context_dim_, h), torch::nn::SiLU(),
                                                      torch::nn::Linear(h, h * config.cond_tokens)));
    blocks_ = register_module("blocks", torch::nn::ModuleList());
    for (int b = 0; b < config.residual_blocks; ++b) blocks_->push_back(DenoiserBlock(h, config.attention_heads));
    out_norm_ = register_module("out_norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({h})));
    output_ = register_module("output", torch::nn::Linear(h, config.latent_dim));
}

torch::Tensor DenoiserImpl::forward(const torch::Tensor& z_k, const torch::Tensor& k, const torch::Tensor& context) {
    if (z_k.dim() != 2 || z_k.size(1) != latent_dim_) throw InputError("denoiser: z_k must be [B, latent_dim]");
    if (k.dim() != 1 || k.size(0) != z_k.size(0)) throw InputError("denoiser: one step index per row expected");
    if (context.dim() != 2 || context.size(0) != z_k.size(0) || context.size(1) != context_dim_) {
        throw InputError("denoiser: context must be [B, " + std::to_string(context_dim_) + "]");
    }
    const auto batch = z_k.size(0);
    auto temb = time_mlp_->forward(timestep_embedding(k, hidden_dim_, z_k.options()));
    auto tokens = cond_mlp_->forward(context).view({batch, cond_tokens_, hidden_dim_});
    auto h = input_(z_k);
    for (const auto& block : *blocks_) h = block->as<DenoiserBlock>()->forward(h, temb, tokens);
    return output_(out_norm_(h));
}

DiffusionDraw sample_draw(int64_t samples, int latent_dim, const NoiseSchedule& schedule, torch::Generator& generator,
                          const torch::TensorOptions& options) {
    DiffusionDraw draw;
    draw.k = torch::randint(1, schedule.steps() + 1, {samples}, generator, torch::TensorOptions().dtype(torch::kLong));
    draw.eps = torch::randn({samples, latent_dim}, generator, options);
    return draw;
}

torch::Tensor build_contexts(const torch::Tensor& obs, const torch::Tensor& actions, int n_actions) {
    if (obs.dim() != 3 || actions.dim() != 2 || obs.size(0) != actions.size(0) || obs.size(1) != actions.size(1)) {
        throw InputError("build_contexts: expected obs [M, N, O] and actions [M, N]");
    }
    const auto m = obs.size(0);
    const auto n = obs.size(1);
    auto one_hot = torch::one_hot(actions.to(torch::kLong), n_actions).to(obs.options());
    std::vector<torch::Tensor> per_agent;
    per_agent.reserve(static_cast<std::size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        std::vector<int64_t> others;
        for (int64_t j = 0; j < n; ++j) {
            if (j != i) others.push_back(j);
        }
        auto other_actions = others.empty()
                                 ? torch::zeros({m, 0}, obs.options())
                                 : one_hot.index_select(1, torch::tensor(others, torch::kLong)).reshape({m, -1});
        per_agent.push_back(torch::cat({obs.select(1, i), other_actions}, -1));
    }
    return torch::stack(per_agent, 1);
}

torch::Tensor noise_prediction_loss(const torch::Tensor& eps, const torch::Tensor& eps_hat) {
    if (eps.sizes() != eps_hat.sizes()) throw InputError("noise loss: shape mismatch");
    if (eps.numel() == 0) throw InputError("noise loss: empty batch");
    return (eps - eps_hat).pow(2).sum(-1).mean();
}

torch::Tensor prediction_loss(const torch::Tensor& next_obs_hat, const torch::Tensor& next_obs,
                              const torch::Tensor& reward_hat, const torch::Tensor& reward, double lambda_dr) {
    if (next_obs_hat.sizes() != next_obs.sizes() || next_obs.dim() != 3) {
        throw InputError("prediction loss: next observations must be [M, N, O] and match");
    }
    if (reward_hat.dim() != 2 || reward.dim() != 1 || reward_hat.size(0) != reward.size(0)) {
        throw InputError("prediction loss: reward predictions must be [M, N] with rewards [M]");
    }
    if (next_obs.size(0) == 0) throw InputError("prediction loss: empty batch");
    auto obs_term = (next_obs_hat - next_obs).pow(2).sum({1, 2});
    auto reward_term = (reward_hat - reward.unsqueeze(-1)).pow(2).sum(-1);
    return (obs_term + lambda_dr * reward_term).mean();
}

RepresentationModelImpl::RepresentationModelImpl(const RepresentationConfig& config) : config_(config) {
    encoder = register_module("encoder", ActionEncoder(config.n_actions, config.hidden_dim, config.latent_dim));
    if (config.use_diffusion) denoiser = register_module("denoiser", Denoiser(config));
    const int in = config.latent_dim + config.context_dim();
    obs_predictor = register_module(
        "obs_predictor", torch::nn::Sequential(torch::nn::Linear(in, config.predictor_hidden), torch::nn::SiLU(),
                                               torch::nn::Linear(config.predictor_hidden, config.predictor_hidden),
                                               torch::nn::SiLU(),
                                               torch::nn::Linear(config.predictor_hidden, config.obs_dim)));
    reward_predictor = register_module(
        "reward_predictor", torch::nn::Sequential(torch::nn::Linear(in, config.predictor_hidden), torch::nn::SiLU(),
                                                  torch::nn::Linear(config.predictor_hidden, 1)));
}

void RepresentationModelImpl::check_context(const torch::Tensor& context) const {
    if (context.dim() < 1 || context.size(-1) != config_.context_dim()) {
        throw InputError("context length must be " + std::to_string(config_.context_dim()));
    }
}

torch::Tensor RepresentationModelImpl::encode(const torch::Tensor& one_hot) { return encoder(one_hot); }

torch::Tensor RepresentationModelImpl::encode_ids(const torch::Tensor& action_ids) {
    auto param = encoder->parameters().front();
    return encoder(torch::one_hot(action_ids.to(torch::kLong), config_.n_actions).to(param.options()));
}

torch::Tensor RepresentationModelImpl::action_representations() {
    auto param = encoder->parameters().front();
    return encoder(torch::eye(config_.n_actions, param.options()));
}

torch::Tensor RepresentationModelImpl::denoise(const torch::Tensor& z_k, const torch::Tensor& k,
                                               const torch::Tensor& context) {
    if (!denoiser) throw UsageError("denoiser disabled in this configuration");
    return denoiser(z_k, k, context);
}

torch::Tensor RepresentationModelImpl::predict_next_obs(const torch::Tensor& z, const torch::Tensor& context) {
    check_context(context);
    if (z.size(-1) != config_.latent_dim) throw InputError("representation length mismatch");
    return obs_predictor->forward(torch::cat({z, context}, -1));
}

torch::Tensor RepresentationModelImpl::predict_reward(const torch::Tensor& z, const torch::Tensor& context) {
    check_context(context);
    if (z.size(-1) != config_.latent_dim) throw InputError("representation length mismatch");
    return reward_predictor->forward(torch::cat({z, context}, -1)).squeeze(-1);
}

torch::Tensor RepresentationModelImpl::diffusion_loss(const torch::Tensor& actions, const torch::Tensor& contexts,
                                                      const DiffusionDraw& draw, const NoiseSchedule& schedule) {
    if (actions.numel() == 0) throw InputError("diffusion loss: empty batch");
    if (draw.k.size(0) != actions.size(0) || draw.eps.size(0) != actions.size(0)) {
        throw InputError("diffusion loss: draw size does not match batch");
    }
    auto z0 = encode_ids(actions);
    auto z_k = q_sample(z0, draw.k, draw.eps.to(z0.options()), schedule);
    return noise_prediction_loss(draw.eps.to(z0.options()), denoise(z_k, draw.k, contexts));
}

torch::Tensor RepresentationModelImpl::diffusion_loss(const torch::Tensor& actions, const torch::Tensor& contexts,
                                                      const NoiseSchedule& schedule, torch::Generator& generator) {
    if (actions.numel() == 0) throw InputError("diffusion loss: empty batch");
    auto opts = encoder->parameters().front().options();
    return diffusion_loss(actions, contexts, sample_draw(actions.size(0), config_.latent_dim, schedule, generator, opts),
                          schedule);
}

torch::Tensor RepresentationModelImpl::prediction_loss(const RepresentationBatch& batch) {
    if (batch.actions.numel() == 0) throw InputError("prediction loss: empty batch");
    auto contexts = build_contexts(batch.obs, batch.actions, config_.n_actions);
    auto z = encode_ids(batch.actions);
    return diffusion::prediction_loss(predict_next_obs(z, contexts), batch.next_obs, predict_reward(z, contexts),
                                      batch.reward, config_.lambda_dr);
}

RepresentationLossParts RepresentationModelImpl::loss(const RepresentationBatch& batch, const DiffusionDraw& draw,
                                                      const NoiseSchedule& schedule) {
    if (batch.actions.numel() == 0) throw InputError("representation loss: empty batch");
    RepresentationLossParts parts;
    parts.prediction = prediction_loss(batch);
    parts.total = parts.prediction;
    if (config_.use_diffusion) {
        auto contexts = build_contexts(batch.obs, batch.actions, config_.n_actions);
        parts.diffusion =
            diffusion_loss(batch.actions.reshape({-1}), contexts.reshape({-1, contexts.size(-1)}), draw, schedule);
        parts.total = parts.prediction + config_.eta_d * parts.diffusion;
    }
    return parts;
}

RepresentationLossParts RepresentationModelImpl::loss(const RepresentationBatch& batch, const NoiseSchedule& schedule,
                                                      torch::Generator& generator) {
    if (batch.actions.numel() == 0) throw InputError("representation loss: empty batch");
    auto opts = encoder->parameters().front().options();
    DiffusionDraw draw;
    if (config_.use_diffusion) draw = sample_draw(batch.actions.numel(), config_.latent_dim, schedule, generator, opts);
    return loss(batch, draw, schedule);
}

torch::Tensor RepresentationModelImpl::reverse_sample(const torch::Tensor& contexts, const NoiseSchedule& schedule,
                                                      torch::Generator& generator) {
    torch::NoGradGuard no_grad;
    check_context(contexts);
    const auto batch = contexts.size(0);
    auto opts = encoder->parameters().front().options();
    auto z_K = torch::randn({batch, config_.latent_dim}, generator, opts);
    NoisePredictor predictor = [&](const torch::Tensor& z, int k) {
        return denoise(z, torch::full({batch}, k, torch::kLong), contexts);
    };
    return diffusion::reverse_sample(predictor, z_K, schedule, generator);
}

torch::Tensor reverse_sample(const NoisePredictor& predictor, torch::Tensor z_K, const NoiseSchedule& schedule,
                             torch::Generator& generator) {
    auto z = std::move(z_K);
    for (int k = schedule.steps(); k >= 1; --k) {
        auto eps_hat = predictor(z, k);
        auto noise = k > 1 ? torch::randn(z.sizes(), generator, z.options()) : torch::zeros_like(z);
        z = reverse_step(z, eps_hat, k, noise, schedule);
    }
    return z;
}

}  // namespace cd3t::diffusion
