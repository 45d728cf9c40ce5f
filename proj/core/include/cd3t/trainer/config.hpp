#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "cd3t/env/lbf.hpp"
#include "cd3t/mixing/mixers.hpp"

namespace cd3t::trainer {

struct TrainConfig {
    std::int64_t total_timesteps = 300'000;
    int batch_size = 32;
    int buffer_capacity = 5000;
    double lr = 0.0005;
    double gamma = 0.99;
    double eps_start = 1.0;
    double eps_finish = 0.05;
    std::int64_t eps_anneal_steps = 50'000;
    int target_update_interval = 200;
    int delta_T = 5;
    std::int64_t subtask_update_start = 50'000;
    int J = 3;
    std::int64_t test_interval = 10'000;
    int test_episodes = 32;
    std::string optimizer = "rmsprop";
    double rmsprop_alpha = 0.99;
    double rmsprop_eps = 1e-5;
    double grad_clip = 10.0;
    std::int64_t checkpoint_interval = 100'000;
    /// Greedy episodes written as step traces after training.
    int trace_episodes = 4;
    unsigned int seed = 1;

    int grid_size = 10;
    int n_agents = 3;
    int n_foods = 3;
    int max_player_level = 3;
    int max_episode_length = 50;
    double move_penalty = -0.002;

    int diffusion_steps = 100;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    int latent_dim = 20;
    double lambda_dr = 10.0;
    double eta_d = 0.1;
    bool use_diffusion = true;
    /// "attention" or "monotonic_hypernet".
    std::string mixer = "attention";
    int mixer_heads = 8;
    int mixer_key_dim = 32;

    /// Throws ConfigError naming the first offending field.
    void validate() const;

    env::EnvConfig env_config() const;
    mixing::MixerKind mixer_kind() const;
};

/// Assigns one field by name. Throws ConfigError naming the key when it is unknown or the value does not parse.
void set_field(TrainConfig& config, const std::string& key, const std::string& value);

/// Flat `key = value` lines; `#` starts a comment. Validates the result.
TrainConfig parse_config(const std::string& text);
TrainConfig load_config(const std::filesystem::path& path);

/// Serializes every field in `key = value` form; parse_config(to_text(c)) reproduces c.
std::string to_text(const TrainConfig& config);

/// Linear from eps_start at t = 0 to eps_finish at eps_anneal_steps, constant afterwards.
double epsilon_at(std::int64_t t, const TrainConfig& config);

}  // namespace cd3t::trainer
