#include "cd3t/trainer/replay_buffer.hpp"

#include <algorithm>
#include <numeric>

#include "cd3t/errors.hpp"

namespace cd3t::trainer {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw ConfigError("replay buffer capacity must be positive");
}

void ReplayBuffer::append(data::Episode episode) {
    episode.validate();
    episodes_.push_back(std::make_shared<const data::Episode>(std::move(episode)));
    while (episodes_.size() > capacity_) episodes_.pop_front();
}

std::optional<std::vector<std::shared_ptr<const data::Episode>>> ReplayBuffer::sample_episodes(
    std::size_t batch_size, std::mt19937_64& rng) const {
    if (batch_size == 0) throw InputError("batch size must be positive");
    if (!ready(batch_size)) return std::nullopt;
    // Partial Fisher-Yates over the index range.
    std::vector<std::size_t> index(episodes_.size());
    std::iota(index.begin(), index.end(), std::size_t{0});
    std::vector<std::shared_ptr<const data::Episode>> out;
    out.reserve(batch_size);
    for (std::size_t i = 0; i < batch_size; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, index.size() - 1);
        std::swap(index[i], index[pick(rng)]);
        out.push_back(episodes_[index[i]]);
    }
    return out;
}

std::optional<data::EpisodeBatch> ReplayBuffer::sample(std::size_t batch_size, std::mt19937_64& rng) const {
    auto episodes = sample_episodes(batch_size, rng);
    if (!episodes) return std::nullopt;
    return data::collate(*episodes);
}

}  // namespace cd3t::trainer
