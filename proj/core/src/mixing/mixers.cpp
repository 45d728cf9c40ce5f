#include "cd3t/mixing/mixers.hpp"

#include "cd3t/errors.hpp"

namespace cd3t::mixing {

AttentionMixer::AttentionMixer(const MixerConfig& config) : config_(config) {
    if (config.heads < 1) throw ConfigError("mixer head count must be >= 1");
    const int width = config.heads * config.key_dim;
    key = register_module("key", torch::nn::Linear(torch::nn::LinearOptions(config.state_dim, width).bias(false)));
    query = register_module("query", torch::nn::Linear(torch::nn::LinearOptions(config.rep_dim, width).bias(false)));
    bias = register_module("bias", torch::nn::Sequential(torch::nn::Linear(config.state_dim, config.bias_hidden),
                                                         torch::nn::ReLU(),
                                                         torch::nn::Linear(config.bias_hidden, 1)));
    head_weights_ = register_parameter("head_weights", torch::full({config.heads}, 1.0 / config.heads));
}

void AttentionMixer::check(const torch::Tensor& q, const torch::Tensor& reps, const torch::Tensor& state) const {
    if (reps.dim() < 2 || reps.size(-1) != config_.rep_dim) throw InputError("mixer: representations must be [..., N, d]");
    if (reps.size(-2) == 0) throw InputError("mixer: no agents");
    if (state.size(-1) != config_.state_dim) throw InputError("mixer: state length mismatch");
    if (q.defined() && (q.sizes() != reps.sizes().slice(0, reps.dim() - 1))) {
        throw InputError("mixer: utilities must be [..., N] matching representations");
    }
    if (state.sizes().slice(0, state.dim() - 1) != reps.sizes().slice(0, reps.dim() - 2)) {
        throw InputError("mixer: leading dimensions of state and representations differ");
    }
}

torch::Tensor AttentionMixer::credit_logits(const torch::Tensor& reps, const torch::Tensor& state) {
    check({}, reps, state);
    const int h = config_.heads;
    const int k = config_.key_dim;
    auto lead = reps.sizes().slice(0, reps.dim() - 2).vec();
    const auto n = reps.size(-2);

    auto keys = torch::relu(key(state));                      // [..., H*K]
    auto queries = query(reps);                               // [..., N, H*K]
    auto key_shape = lead;
    key_shape.insert(key_shape.end(), {h, k, 1});
    auto query_shape = lead;
    query_shape.insert(query_shape.end(), {n, h, k});
    auto q = queries.view(query_shape).transpose(-2, -3);      // [..., H, N, K]
    return torch::matmul(q, keys.view(key_shape)).squeeze(-1); // [..., H, N]
}

torch::Tensor AttentionMixer::credits(const torch::Tensor& reps, const torch::Tensor& state) {
    return torch::softmax(credit_logits(reps, state), -1);
}

torch::Tensor AttentionMixer::state_bias(const torch::Tensor& state) { return bias->forward(state).squeeze(-1); }

torch::Tensor AttentionMixer::forward(const torch::Tensor& q, const torch::Tensor& reps, const torch::Tensor& state) {
    check(q, reps, state);
    auto credit = credits(reps, state);                             // [..., H, N]
    auto per_head = (credit * q.unsqueeze(-2)).sum(-1);            // [..., H]
    return state_bias(state) + (per_head * head_weights()).sum(-1);
}

MonotonicHypernetMixer::MonotonicHypernetMixer(const MixerConfig& config) : config_(config) {
    const int s = config.state_dim;
    const int e = config.qmix_embed;
    const int hh = config.hypernet_hidden;
    hyper_w1_ = register_module("hyper_w1", torch::nn::Sequential(torch::nn::Linear(s, hh), torch::nn::ReLU(),
                                                                  torch::nn::Linear(hh, config.n_agents * e)));
    hyper_b1_ = register_module("hyper_b1", torch::nn::Linear(s, e));
    hyper_w2_ = register_module("hyper_w2", torch::nn::Sequential(torch::nn::Linear(s, hh), torch::nn::ReLU(),
                                                                  torch::nn::Linear(hh, e)));
    value_ = register_module("value", torch::nn::Sequential(torch::nn::Linear(s, e), torch::nn::ReLU(),
                                                            torch::nn::Linear(e, 1)));
}

torch::Tensor MonotonicHypernetMixer::forward(const torch::Tensor& q, const torch::Tensor& /*reps*/,
                                              const torch::Tensor& state) {
    if (q.size(-1) != config_.n_agents) throw InputError("hypernet mixer: agent count mismatch");
    if (state.size(-1) != config_.state_dim) throw InputError("hypernet mixer: state length mismatch");
    auto lead = q.sizes().slice(0, q.dim() - 1).vec();
    const auto rows = q.numel() / config_.n_agents;
    const int e = config_.qmix_embed;
    auto s = state.reshape({rows, config_.state_dim});
    auto w1 = hyper_w1_->forward(s).abs().view({rows, config_.n_agents, e});
    auto b1 = hyper_b1_(s).view({rows, 1, e});
    auto hidden = torch::elu(torch::bmm(q.reshape({rows, 1, config_.n_agents}), w1) + b1);
    auto w2 = hyper_w2_->forward(s).abs().view({rows, e, 1});
    auto out = torch::bmm(hidden, w2).view({rows}) + value_->forward(s).view({rows});
    return out.view(lead);
}

std::shared_ptr<MixerBase> make_mixer(MixerKind kind, const MixerConfig& config) {
    switch (kind) {
        case MixerKind::kAttention: return std::make_shared<AttentionMixer>(config);
        case MixerKind::kMonotonicHypernet: return std::make_shared<MonotonicHypernetMixer>(config);
    }
    throw ConfigError("unknown mixer kind");
}

std::string to_string(MixerKind kind) {
    return kind == MixerKind::kAttention ? "attention" : "monotonic_hypernet";
}

}  // namespace cd3t::mixing
