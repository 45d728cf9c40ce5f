#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include <torch/torch.h>

#include "cd3t/agents/agent_network.hpp"
#include "cd3t/mixing/mixers.hpp"

namespace cd3t::mixing {

struct ValueNetworksConfig {
    agents::AgentConfig agent;
    MixerConfig mixer;
    MixerKind mixer_kind = MixerKind::kAttention;
};

/// Every parameter that enters a TD loss: shared agent network plus one mixer per level.
class ValueNetworksImpl : public torch::nn::Module {
public:
    explicit ValueNetworksImpl(const ValueNetworksConfig& config);

    const ValueNetworksConfig& config() const { return config_; }

    /// Selector stream, selector head, selector mixer.
    std::vector<torch::Tensor> selector_parameters();
    /// Policy stream, policy head, policy mixer.
    std::vector<torch::Tensor> policy_parameters();

    agents::AgentNetwork agent{nullptr};
    std::shared_ptr<MixerBase> selector_mixer;
    std::shared_ptr<MixerBase> policy_mixer;

private:
    ValueNetworksConfig config_;
};
TORCH_MODULE(ValueNetworks);

/// Copies parameters and buffers by name. Throws InputError when the structures differ.
void copy_parameters(torch::nn::Module& source, torch::nn::Module& destination);

/// Fresh network with the same configuration, dtype and parameter values as `live`.
ValueNetworks clone_networks(ValueNetworks& live);

struct TargetNetworks {
    ValueNetworks networks{nullptr};
    int64_t last_sync = 0;
};

TargetNetworks make_targets(ValueNetworks& live, int64_t episode_count = 0);

/// Copies live into targets iff episode_count - last_sync >= interval. Returns whether a copy happened.
bool sync_targets(ValueNetworks& live, TargetNetworks& targets, int64_t episode_count, int64_t interval = 200);

}  // namespace cd3t::mixing
