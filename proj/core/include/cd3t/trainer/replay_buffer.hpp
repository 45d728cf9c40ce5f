#pragma once

#include <cstddef>
#include <deque>
#include <memory>
#include <optional>
#include <random>
#include <vector>

#include "cd3t/data/episode.hpp"

namespace cd3t::trainer {

/// FIFO store of complete episodes.
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity);

    /// Validates, then stores an immutable copy; evicts the oldest episode beyond capacity.
    void append(data::Episode episode);

    std::size_t size() const { return episodes_.size(); }
    std::size_t capacity() const { return capacity_; }
    bool ready(std::size_t batch_size) const { return episodes_.size() >= batch_size; }

    /// Oldest first.
    const std::shared_ptr<const data::Episode>& at(std::size_t index) const { return episodes_.at(index); }

    /// Uniform draw without replacement; std::nullopt when fewer than batch_size episodes are stored.
    std::optional<std::vector<std::shared_ptr<const data::Episode>>> sample_episodes(std::size_t batch_size,
                                                                                      std::mt19937_64& rng) const;
    std::optional<data::EpisodeBatch> sample(std::size_t batch_size, std::mt19937_64& rng) const;

private:
    std::size_t capacity_;
    std::deque<std::shared_ptr<const data::Episode>> episodes_;
};

}  // namespace cd3t::trainer
