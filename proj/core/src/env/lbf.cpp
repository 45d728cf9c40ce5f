#include "cd3t/env/lbf.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "cd3t/errors.hpp"

namespace cd3t::env {

namespace {

constexpr std::array<std::string_view, kNumActions> kActionNames = {"NOOP", "UP", "DOWN", "LEFT", "RIGHT", "LOAD"};

bool is_move(int action) {
    return action >= static_cast<int>(Action::kUp) && action <= static_cast<int>(Action::kRight);
}

Cell move_target(Cell from, int action) {
    switch (static_cast<Action>(action)) {
        case Action::kUp: return {from.row - 1, from.col};
        case Action::kDown: return {from.row + 1, from.col};
        case Action::kLeft: return {from.row, from.col - 1};
        case Action::kRight: return {from.row, from.col + 1};
        default: return from;
    }
}

bool in_bounds(const EnvConfig& config, Cell c) {
    return c.row >= 0 && c.col >= 0 && c.row < config.grid_size && c.col < config.grid_size;
}

bool adjacent(Cell a, Cell b) {
    return std::abs(a.row - b.row) + std::abs(a.col - b.col) == 1;
}

bool occupied(const GlobalState& state, Cell c) {
    for (const auto& p : state.agent_positions) {
        if (p == c) return true;
    }
    for (const auto& f : state.food_positions) {
        if (f && *f == c) return true;
    }
    return false;
}

}  // namespace

std::string_view action_name(int action) {
    if (action < 0 || action >= kNumActions) throw InputError("action id out of range: " + std::to_string(action));
    return kActionNames[static_cast<std::size_t>(action)];
}

void EnvConfig::validate() const {
    if (grid_size < 3) throw ConfigError("grid_size must be >= 3");
    if (n_agents < 1 || n_agents > grid_size * grid_size) throw ConfigError("n_agents must be in [1, grid_size^2]");
    if (n_foods < 1) throw ConfigError("n_foods must be >= 1");
    if (max_player_level < 1) throw ConfigError("max_player_level must be >= 1");
    if (max_episode_length < 1) throw ConfigError("max_episode_length must be >= 1");
    if (n_agents + n_foods > grid_size * grid_size) {
        throw ConfigError("cannot place " + std::to_string(n_agents + n_foods) + " entities on " +
                          std::to_string(grid_size * grid_size) + " cells");
    }
}

int GlobalState::foods_remaining() const {
    return static_cast<int>(std::count_if(food_positions.begin(), food_positions.end(),
                                          [](const auto& f) { return f.has_value(); }));
}

bool is_terminal(const EnvConfig& config, const GlobalState& state) {
    return state.foods_remaining() == 0 || state.t >= config.max_episode_length;
}

unsigned int derive_seed(unsigned int base_seed, std::uint64_t stream, std::uint64_t index) {
    std::seed_seq seq{base_seed, static_cast<unsigned int>(stream), static_cast<unsigned int>(stream >> 32),
                      static_cast<unsigned int>(index), static_cast<unsigned int>(index >> 32)};
    std::array<unsigned int, 1> out{};
    seq.generate(out.begin(), out.end());
    return out[0];
}

GlobalState reset_state(const EnvConfig& config, unsigned int seed) {
    config.validate();
    std::mt19937_64 rng(seed);

    const int cells = config.grid_size * config.grid_size;
    std::vector<int> order(static_cast<std::size_t>(cells));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);

    auto cell_at = [&](int idx) { return Cell{idx / config.grid_size, idx % config.grid_size}; };

    GlobalState state;
    std::uniform_int_distribution<int> agent_level(1, config.max_player_level);
    for (int i = 0; i < config.n_agents; ++i) {
        state.agent_positions.push_back(cell_at(order[static_cast<std::size_t>(i)]));
        state.agent_levels.push_back(agent_level(rng));
    }
    const int level_sum = std::accumulate(state.agent_levels.begin(), state.agent_levels.end(), 0);
    std::uniform_int_distribution<int> food_level(1, level_sum);
    for (int f = 0; f < config.n_foods; ++f) {
        state.food_positions.emplace_back(cell_at(order[static_cast<std::size_t>(config.n_agents + f)]));
        state.food_levels.push_back(food_level(rng));
    }
    state.t = 0;
    return state;
}

StepResult step_state(const EnvConfig& config, const GlobalState& state, const JointAction& actions) {
    if (is_terminal(config, state)) throw UsageError("step called on a finished episode");
    if (static_cast<int>(actions.size()) != config.n_agents) {
        throw InputError("expected " + std::to_string(config.n_agents) + " actions, got " +
                         std::to_string(actions.size()));
    }
    for (int a : actions) {
        if (a < 0 || a >= kNumActions) throw InputError("action id out of range: " + std::to_string(a));
    }

    StepResult result;
    result.state = state;
    GlobalState& next = result.state;
    const auto n = static_cast<std::size_t>(config.n_agents);

    // Movement: targets must be in-bounds and currently free; any shared target cancels all its movers.
    std::vector<std::optional<Cell>> targets(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (!is_move(actions[i])) continue;
        ++result.move_attempts;
        const Cell target = move_target(state.agent_positions[i], actions[i]);
        if (in_bounds(config, target) && !occupied(state, target)) targets[i] = target;
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!targets[i]) continue;
        bool conflict = false;
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i && targets[j] && *targets[j] == *targets[i]) conflict = true;
        }
        if (!conflict) next.agent_positions[i] = *targets[i];
    }

    result.reward = config.move_penalty * result.move_attempts;

    const int total_food_level = std::accumulate(state.food_levels.begin(), state.food_levels.end(), 0);
    for (std::size_t f = 0; f < next.food_positions.size(); ++f) {
        if (!next.food_positions[f]) continue;
        const Cell food = *next.food_positions[f];
        int loader_levels = 0;
        int loaders = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (actions[i] == static_cast<int>(Action::kLoad) && adjacent(next.agent_positions[i], food)) {
                loader_levels += next.agent_levels[i];
                ++loaders;
            }
        }
        if (loaders > 0 && loader_levels >= next.food_levels[f]) {
            next.food_positions[f].reset();
            result.reward += static_cast<double>(next.food_levels[f]) / total_food_level;
            ++result.foods_consumed;
        }
    }

    next.t = state.t + 1;
    result.done = is_terminal(config, next);
    result.observations = observe_all(config, next);
    return result;
}

ActionMask available_actions(const EnvConfig& config, const GlobalState& state, int agent_id) {
    if (agent_id < 0 || agent_id >= config.n_agents) throw InputError("agent id out of range");
    ActionMask mask{};
    mask[static_cast<std::size_t>(Action::kNoop)] = true;
    const Cell pos = state.agent_positions[static_cast<std::size_t>(agent_id)];
    for (int a = static_cast<int>(Action::kUp); a <= static_cast<int>(Action::kRight); ++a) {
        const Cell target = move_target(pos, a);
        mask[static_cast<std::size_t>(a)] = in_bounds(config, target) && !occupied(state, target);
    }
    for (const auto& f : state.food_positions) {
        if (f && adjacent(*f, pos)) mask[static_cast<std::size_t>(Action::kLoad)] = true;
    }
    return mask;
}

Observation observe(const EnvConfig& config, const GlobalState& state, int agent_id) {
    if (agent_id < 0 || agent_id >= config.n_agents) throw InputError("agent id out of range");
    constexpr int radius = kWindowSide / 2;
    constexpr int plane = kWindowSide * kWindowSide;
    Observation obs{};
    const Cell self = state.agent_positions[static_cast<std::size_t>(agent_id)];

    auto window_index = [&](Cell c) -> std::optional<int> {
        const int dr = c.row - self.row + radius;
        const int dc = c.col - self.col + radius;
        if (dr < 0 || dc < 0 || dr >= kWindowSide || dc >= kWindowSide) return std::nullopt;
        return dr * kWindowSide + dc;
    };

    for (int dr = 0; dr < kWindowSide; ++dr) {
        for (int dc = 0; dc < kWindowSide; ++dc) {
            const Cell c{self.row + dr - radius, self.col + dc - radius};
            if (!in_bounds(config, c)) {
                const int idx = dr * kWindowSide + dc;
                for (int ch = 0; ch < kWindowChannels; ++ch) obs[static_cast<std::size_t>(ch * plane + idx)] = -1.0f;
            }
        }
    }
    for (std::size_t i = 0; i < state.agent_positions.size(); ++i) {
        if (auto idx = window_index(state.agent_positions[i])) {
            obs[static_cast<std::size_t>(*idx)] = static_cast<float>(state.agent_levels[i]);
        }
    }
    for (std::size_t f = 0; f < state.food_positions.size(); ++f) {
        if (!state.food_positions[f]) continue;
        if (auto idx = window_index(*state.food_positions[f])) {
            obs[static_cast<std::size_t>(plane + *idx)] = static_cast<float>(state.food_levels[f]);
        }
    }
    obs[static_cast<std::size_t>(2 * plane + radius * kWindowSide + radius)] = 1.0f;
    obs[kObservationSize - 2] = static_cast<float>(state.agent_levels[static_cast<std::size_t>(agent_id)]);
    obs[kObservationSize - 1] = static_cast<float>(state.t) / static_cast<float>(config.max_episode_length);
    return obs;
}

std::vector<Observation> observe_all(const EnvConfig& config, const GlobalState& state) {
    std::vector<Observation> out;
    out.reserve(static_cast<std::size_t>(config.n_agents));
    for (int i = 0; i < config.n_agents; ++i) out.push_back(observe(config, state, i));
    return out;
}

std::vector<float> flatten_state(const EnvConfig& config, const GlobalState& state) {
    std::vector<float> s;
    s.reserve(static_cast<std::size_t>(config.state_size()));
    const auto extent = static_cast<float>(config.grid_size - 1);
    const auto max_food = static_cast<float>(config.n_agents * config.max_player_level);
    for (std::size_t i = 0; i < state.agent_positions.size(); ++i) {
        s.push_back(static_cast<float>(state.agent_positions[i].row) / extent);
        s.push_back(static_cast<float>(state.agent_positions[i].col) / extent);
        s.push_back(static_cast<float>(state.agent_levels[i]) / static_cast<float>(config.max_player_level));
    }
    for (std::size_t f = 0; f < state.food_positions.size(); ++f) {
        const auto& pos = state.food_positions[f];
        s.push_back(pos ? static_cast<float>(pos->row) / extent : 0.0f);
        s.push_back(pos ? static_cast<float>(pos->col) / extent : 0.0f);
        s.push_back(static_cast<float>(state.food_levels[f]) / max_food);
        s.push_back(pos ? 0.0f : 1.0f);
    }
    s.push_back(static_cast<float>(state.t) / static_cast<float>(config.max_episode_length));
    return s;
}

LbfEnv::LbfEnv(EnvConfig config) : config_(config) { config_.validate(); }

std::vector<Observation> LbfEnv::reset(unsigned int seed) {
    state_ = reset_state(config_, seed);
    done_ = false;
    return observe_all(config_, state_);
}

StepResult LbfEnv::step(const JointAction& actions) {
    if (done_) throw UsageError("step called on a finished episode");
    StepResult result = step_state(config_, state_, actions);
    state_ = result.state;
    done_ = result.done;
    return result;
}

}  // namespace cd3t::env
