#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <string_view>
#include <vector>

namespace cd3t::env {

enum class Action : int { kNoop = 0, kUp = 1, kDown = 2, kLeft = 3, kRight = 4, kLoad = 5 };

inline constexpr int kNumActions = 6;
inline constexpr int kWindowSide = 5;
inline constexpr int kWindowChannels = 3;
/// 5x5x3 window, own level, t / horizon.
inline constexpr int kObservationSize = kWindowSide * kWindowSide * kWindowChannels + 2;

std::string_view action_name(int action);

struct Cell {
    int row = 0;
    int col = 0;

    friend bool operator==(const Cell&, const Cell&) = default;
};

struct EnvConfig {
    int grid_size = 10;
    int n_agents = 3;
    int n_foods = 3;
    int max_player_level = 3;
    int max_episode_length = 50;
    double move_penalty = -0.002;
    unsigned int seed = 0;

    /// Throws ConfigError on violated bounds.
    void validate() const;
    /// agents * (row, col, level) + foods * (row, col, level, eaten) + t_frac.
    int state_size() const { return 3 * n_agents + 4 * n_foods + 1; }
};

struct GlobalState {
    std::vector<Cell> agent_positions;
    std::vector<int> agent_levels;
    /// Empty optional once the food has been consumed.
    std::vector<std::optional<Cell>> food_positions;
    std::vector<int> food_levels;
    int t = 0;

    int foods_remaining() const;
    friend bool operator==(const GlobalState&, const GlobalState&) = default;
};

using Observation = std::array<float, kObservationSize>;
using JointAction = std::vector<int>;
using ActionMask = std::array<bool, kNumActions>;

struct StepResult {
    GlobalState state;
    std::vector<Observation> observations;
    double reward = 0.0;
    bool done = false;
    int foods_consumed = 0;
    int move_attempts = 0;
};

/// Episode is over when every food is gone or the horizon is reached.
bool is_terminal(const EnvConfig& config, const GlobalState& state);

/// Random layout from `seed`; bit-identical for equal (config, seed).
GlobalState reset_state(const EnvConfig& config, unsigned int seed);

/// Pure transition function. Throws UsageError when `state` is already terminal.
StepResult step_state(const EnvConfig& config, const GlobalState& state, const JointAction& actions);

ActionMask available_actions(const EnvConfig& config, const GlobalState& state, int agent_id);

Observation observe(const EnvConfig& config, const GlobalState& state, int agent_id);
std::vector<Observation> observe_all(const EnvConfig& config, const GlobalState& state);

std::vector<float> flatten_state(const EnvConfig& config, const GlobalState& state);

/// Stateful wrapper: owns the config and the current state.
class LbfEnv {
public:
    explicit LbfEnv(EnvConfig config);

    std::vector<Observation> reset(unsigned int seed);
    StepResult step(const JointAction& actions);

    const EnvConfig& config() const { return config_; }
    const GlobalState& state() const { return state_; }
    bool done() const { return done_; }
    ActionMask available(int agent_id) const { return available_actions(config_, state_, agent_id); }
    std::vector<float> state_vector() const { return flatten_state(config_, state_); }

private:
    EnvConfig config_;
    GlobalState state_;
    bool done_ = true;
};

/// Seed for worker `worker_id` derived from a run-level base seed.
unsigned int derive_seed(unsigned int base_seed, std::uint64_t stream, std::uint64_t index);

}  // namespace cd3t::env
