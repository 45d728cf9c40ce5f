#include "cd3t/data/episode.hpp"

#include <algorithm>
#include <cstring>
#include <numeric>
#include <string>

#include "cd3t/errors.hpp"

namespace cd3t::data {

double Episode::episode_return() const { return std::accumulate(reward.begin(), reward.end(), 0.0); }

void Episode::validate() const {
    const auto steps = static_cast<std::size_t>(length);
    const auto n = static_cast<std::size_t>(n_agents);
    auto expect = [](std::size_t got, std::size_t want, const char* what) {
        if (got != want) {
            throw InputError(std::string("malformed episode: ") + what + " has " + std::to_string(got) +
                             " entries, expected " + std::to_string(want));
        }
    };
    if (length < 1) throw InputError("malformed episode: empty trajectory");
    if (n_agents < 1 || obs_dim < 1 || state_dim < 1 || n_actions < 1) throw InputError("malformed episode: dimensions");
    expect(obs.size(), (steps + 1) * n * static_cast<std::size_t>(obs_dim), "obs");
    expect(state.size(), (steps + 1) * static_cast<std::size_t>(state_dim), "state");
    expect(avail.size(), (steps + 1) * n * static_cast<std::size_t>(n_actions), "avail");
    expect(subtasks.size(), (steps + 1) * n, "subtasks");
    expect(actions.size(), steps * n, "actions");
    expect(reward.size(), steps, "reward");
    expect(done.size(), steps, "done");
    for (int a : actions) {
        if (a < 0 || a >= n_actions) throw InputError("malformed episode: action id out of range");
    }
}

EpisodeBatch EpisodeBatch::to(torch::ScalarType dtype) const {
    EpisodeBatch out = *this;
    out.obs = obs.to(dtype);
    out.state = state.to(dtype);
    out.reward = reward.to(dtype);
    out.done = done.to(dtype);
    out.valid = valid.to(dtype);
    return out;
}

EpisodeBatch EpisodeBatch::padded(int64_t extra) const {
    if (extra <= 0) return *this;
    auto pad_time = [extra](const torch::Tensor& t, double value) {
        auto shape = t.sizes().vec();
        shape[1] = extra;
        return torch::cat({t, torch::full(shape, value, t.options())}, 1);
    };
    EpisodeBatch out;
    out.obs = pad_time(obs, 0.0);
    out.state = pad_time(state, 0.0);
    out.avail = pad_time(avail, 0.0);
    out.subtasks = pad_time(subtasks, -1.0);
    out.actions = pad_time(actions, 0.0);
    out.reward = pad_time(reward, 0.0);
    out.done = pad_time(done, 0.0);
    out.valid = pad_time(valid, 0.0);
    return out;
}

EpisodeBatch collate(std::span<const std::shared_ptr<const Episode>> episodes, int64_t min_length) {
    if (episodes.empty()) throw InputError("cannot collate an empty episode list");
    const auto& first = *episodes.front();
    const int64_t b = static_cast<int64_t>(episodes.size());
    int64_t t_max = min_length;
    for (const auto& e : episodes) {
        if (e->n_agents != first.n_agents || e->obs_dim != first.obs_dim || e->state_dim != first.state_dim ||
            e->n_actions != first.n_actions) {
            throw InputError("episodes in a batch must share dimensions");
        }
        t_max = std::max<int64_t>(t_max, e->length);
    }
    const int64_t n = first.n_agents;
    const int64_t o = first.obs_dim;
    const int64_t s = first.state_dim;
    const int64_t a = first.n_actions;

    EpisodeBatch batch;
    batch.obs = torch::zeros({b, t_max + 1, n, o}, torch::kFloat32);
    batch.state = torch::zeros({b, t_max + 1, s}, torch::kFloat32);
    batch.avail = torch::zeros({b, t_max + 1, n, a}, torch::kBool);
    batch.subtasks = torch::full({b, t_max + 1, n}, -1, torch::kLong);
    batch.actions = torch::zeros({b, t_max, n}, torch::kLong);
    batch.reward = torch::zeros({b, t_max}, torch::kFloat32);
    batch.done = torch::zeros({b, t_max}, torch::kFloat32);
    batch.valid = torch::zeros({b, t_max}, torch::kFloat32);

    auto* obs = batch.obs.data_ptr<float>();
    auto* state = batch.state.data_ptr<float>();
    auto* avail = batch.avail.data_ptr<bool>();
    auto* subtasks = batch.subtasks.data_ptr<int64_t>();
    auto* actions = batch.actions.data_ptr<int64_t>();
    auto* reward = batch.reward.data_ptr<float>();
    auto* done = batch.done.data_ptr<float>();
    auto* valid = batch.valid.data_ptr<float>();

    for (int64_t i = 0; i < b; ++i) {
        const Episode& e = *episodes[static_cast<std::size_t>(i)];
        const int64_t len = e.length;
        std::memcpy(obs + i * (t_max + 1) * n * o, e.obs.data(), sizeof(float) * e.obs.size());
        std::memcpy(state + i * (t_max + 1) * s, e.state.data(), sizeof(float) * e.state.size());
        for (std::size_t k = 0; k < e.avail.size(); ++k) avail[i * (t_max + 1) * n * a + static_cast<int64_t>(k)] = e.avail[k] != 0;
        for (std::size_t k = 0; k < e.subtasks.size(); ++k) subtasks[i * (t_max + 1) * n + static_cast<int64_t>(k)] = e.subtasks[k];
        for (std::size_t k = 0; k < e.actions.size(); ++k) actions[i * t_max * n + static_cast<int64_t>(k)] = e.actions[k];
        for (int64_t t = 0; t < len; ++t) {
            reward[i * t_max + t] = e.reward[static_cast<std::size_t>(t)];
            done[i * t_max + t] = e.done[static_cast<std::size_t>(t)] ? 1.0f : 0.0f;
            valid[i * t_max + t] = 1.0f;
        }
    }
    return batch;
}

}  // namespace cd3t::data
