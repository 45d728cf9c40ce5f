#pragma once

#include <memory>
#include <string>

#include <torch/torch.h>

namespace cd3t::mixing {

struct MixerConfig {
    int n_agents = 3;
    int state_dim = 22;
    int rep_dim = 20;
    int heads = 8;
    /// Width of the key (state) and query (representation) projections.
    int key_dim = 32;
    int bias_hidden = 32;
    /// Monotonic hypernetwork mixer (ablation) widths.
    int qmix_embed = 32;
    int hypernet_hidden = 64;
};

enum class MixerKind { kAttention, kMonotonicHypernet };

/// Maps per-agent utilities to a joint value: Q [..., N], reps [..., N, d], state [..., S] -> [...].
class MixerBase : public torch::nn::Module {
public:
    virtual torch::Tensor forward(const torch::Tensor& q, const torch::Tensor& reps, const torch::Tensor& state) = 0;
};

/// Q_tot = c(s) + sum_h |w_h| sum_i lambda_{h,i} Q_i with
/// lambda_{h,.} = softmax_i((W_z^h rep_i)^T ReLU(W_s^h s)).
class AttentionMixer : public MixerBase {
public:
    explicit AttentionMixer(const MixerConfig& config);

    torch::Tensor forward(const torch::Tensor& q, const torch::Tensor& reps, const torch::Tensor& state) override;

    /// Credits for every head: reps [..., N, d], state [..., S] -> [..., H, N].
    torch::Tensor credits(const torch::Tensor& reps, const torch::Tensor& state);
    /// Pre-softmax attention logits, same shape as credits().
    torch::Tensor credit_logits(const torch::Tensor& reps, const torch::Tensor& state);
    /// |w_h|, always nonnegative.
    torch::Tensor head_weights() const { return head_weights_.abs(); }
    torch::Tensor state_bias(const torch::Tensor& state);

    const MixerConfig& config() const { return config_; }

    torch::nn::Linear key{nullptr};    ///< W_s for all heads, [S -> H * key_dim]
    torch::nn::Linear query{nullptr};  ///< W_z for all heads, [d -> H * key_dim]
    torch::nn::Sequential bias{nullptr};

private:
    void check(const torch::Tensor& q, const torch::Tensor& reps, const torch::Tensor& state) const;

    MixerConfig config_;
    torch::Tensor head_weights_;
};

/// Hypernetwork mixer with absolute-value weights; ignores the representations.
class MonotonicHypernetMixer : public MixerBase {
public:
    explicit MonotonicHypernetMixer(const MixerConfig& config);

    torch::Tensor forward(const torch::Tensor& q, const torch::Tensor& reps, const torch::Tensor& state) override;

private:
    MixerConfig config_;
    torch::nn::Sequential hyper_w1_{nullptr};
    torch::nn::Linear hyper_b1_{nullptr};
    torch::nn::Sequential hyper_w2_{nullptr};
    torch::nn::Sequential value_{nullptr};
};

std::shared_ptr<MixerBase> make_mixer(MixerKind kind, const MixerConfig& config);

std::string to_string(MixerKind kind);

}  // namespace cd3t::mixing
