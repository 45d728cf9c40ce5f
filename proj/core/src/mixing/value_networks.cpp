#include "cd3t/mixing/value_networks.hpp"

#include <string>

#include "cd3t/errors.hpp"

namespace cd3t::mixing {

ValueNetworksImpl::ValueNetworksImpl(const ValueNetworksConfig& config) : config_(config) {
    if (config.agent.latent_dim != config.mixer.rep_dim) {
        throw ConfigError("agent latent width and mixer representation width differ");
    }
    agent = register_module("agent", agents::AgentNetwork(config.agent));
    selector_mixer = register_module("selector_mixer", make_mixer(config.mixer_kind, config.mixer));
    policy_mixer = register_module("policy_mixer", make_mixer(config.mixer_kind, config.mixer));
}

std::vector<torch::Tensor> ValueNetworksImpl::selector_parameters() {
    auto out = agent->selector_parameters();
    auto mixer = selector_mixer->parameters();
    out.insert(out.end(), mixer.begin(), mixer.end());
    return out;
}

std::vector<torch::Tensor> ValueNetworksImpl::policy_parameters() {
    auto out = agent->policy_parameters();
    auto mixer = policy_mixer->parameters();
    out.insert(out.end(), mixer.begin(), mixer.end());
    return out;
}

void copy_parameters(torch::nn::Module& source, torch::nn::Module& destination) {
    torch::NoGradGuard no_grad;
    auto src_params = source.named_parameters();
    auto dst_params = destination.named_parameters();
    if (src_params.size() != dst_params.size()) throw InputError("parameter copy: structures differ");
    for (const auto& item : src_params) {
        auto* dst = dst_params.find(item.key());
        if (dst == nullptr || dst->sizes() != item.value().sizes()) {
            throw InputError("parameter copy: no matching destination for " + item.key());
        }
        dst->copy_(item.value());
    }
    auto src_buffers = source.named_buffers();
    auto dst_buffers = destination.named_buffers();
    for (const auto& item : src_buffers) {
        auto* dst = dst_buffers.find(item.key());
        if (dst == nullptr) throw InputError("parameter copy: no matching buffer for " + item.key());
        dst->copy_(item.value());
    }
}

ValueNetworks clone_networks(ValueNetworks& live) {
    ValueNetworks copy(live->config());
    auto params = live->parameters();
    if (!params.empty()) copy->to(params.front().scalar_type());
    copy_parameters(*live, *copy);
    return copy;
}

TargetNetworks make_targets(ValueNetworks& live, int64_t episode_count) {
    TargetNetworks targets;
    targets.networks = clone_networks(live);
    for (auto& p : targets.networks->parameters()) p.set_requires_grad(false);
    targets.last_sync = episode_count;
    return targets;
}

bool sync_targets(ValueNetworks& live, TargetNetworks& targets, int64_t episode_count, int64_t interval) {
    if (episode_count - targets.last_sync < interval) return false;
    copy_parameters(*live, *targets.networks);
    targets.last_sync = episode_count;
    return true;
}

}  // namespace cd3t::mixing
