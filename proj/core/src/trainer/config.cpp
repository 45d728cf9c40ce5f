#include "cd3t/trainer/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <system_error>
#include <type_traits>
#include <vector>

#include "cd3t/errors.hpp"

namespace cd3t::trainer {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return {};
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

template <typename T>
T parse_value(const std::string& key, const std::string& text) {
    auto fail = [&] { return ConfigError("invalid value '" + text + "' for key '" + key + "'"); };
    if constexpr (std::is_same_v<T, std::string>) {
        if (text.empty()) throw fail();
        return text;
    } else if constexpr (std::is_same_v<T, bool>) {
        if (text == "true" || text == "1") return true;
        if (text == "false" || text == "0") return false;
        throw fail();
    } else {
        T value{};
        const char* first = text.data();
        const char* last = first + text.size();
        auto [ptr, ec] = std::from_chars(first, last, value);
        if (ec != std::errc() || ptr != last) throw fail();
        return value;
    }
}

template <typename T>
std::string format_value(const T& value) {
    if constexpr (std::is_same_v<T, std::string>) {
        return value;
    } else if constexpr (std::is_same_v<T, bool>) {
        return value ? "true" : "false";
    } else {
        char buf[64];
        auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
        return std::string(buf, ptr);
    }
}

struct Field {
    std::string name;
    std::function<void(TrainConfig&, const std::string&)> set;
    std::function<std::string(const TrainConfig&)> get;
};

template <typename T>
Field field(std::string name, T TrainConfig::*member) {
    return {name,
            [member, name](TrainConfig& c, const std::string& v) { c.*member = parse_value<T>(name, v); },
            [member](const TrainConfig& c) { return format_value(c.*member); }};
}

const std::vector<Field>& fields() {
    static const std::vector<Field> table = {
        field("total_timesteps", &TrainConfig::total_timesteps),
        field("batch_size", &TrainConfig::batch_size),
        field("buffer_capacity", &TrainConfig::buffer_capacity),
        field("lr", &TrainConfig::lr),
        field("gamma", &TrainConfig::gamma),
        field("eps_start", &TrainConfig::eps_start),
        field("eps_finish", &TrainConfig::eps_finish),
        field("eps_anneal_steps", &TrainConfig::eps_anneal_steps),
        field("target_update_interval", &TrainConfig::target_update_interval),
        field("delta_T", &TrainConfig::delta_T),
        field("subtask_update_start", &TrainConfig::subtask_update_start),
        field("J", &TrainConfig::J),
        field("test_interval", &TrainConfig::test_interval),
        field("test_episodes", &TrainConfig::test_episodes),
        field("optimizer", &TrainConfig::optimizer),
        field("rmsprop_alpha", &TrainConfig::rmsprop_alpha),
        field("rmsprop_eps", &TrainConfig::rmsprop_eps),
        field("grad_clip", &TrainConfig::grad_clip),
        field("checkpoint_interval", &TrainConfig::checkpoint_interval),
        field("trace_episodes", &TrainConfig::trace_episodes),
        field("seed", &TrainConfig::seed),
        field("grid_size", &TrainConfig::grid_size),
        field("n_agents", &TrainConfig::n_agents),
        field("n_foods", &TrainConfig::n_foods),
        field("max_player_level", &TrainConfig::max_player_level),
        field("max_episode_length", &TrainConfig::max_episode_length),
        field("move_penalty", &TrainConfig::move_penalty),
        field("diffusion_steps", &TrainConfig::diffusion_steps),
        field("beta_start", &TrainConfig::beta_start),
        field("beta_end", &TrainConfig::beta_end),
        field("latent_dim", &TrainConfig::latent_dim),
        field("lambda_dr", &TrainConfig::lambda_dr),
        field("eta_d", &TrainConfig::eta_d),
        field("use_diffusion", &TrainConfig::use_diffusion),
        field("mixer", &TrainConfig::mixer),
        field("mixer_heads", &TrainConfig::mixer_heads),
        field("mixer_key_dim", &TrainConfig::mixer_key_dim),
    };
    return table;
}

void require(bool ok, const char* key, const char* rule) {
    if (!ok) throw ConfigError(std::string("invalid config key '") + key + "': " + rule);
}

}  // namespace

void TrainConfig::validate() const {
    require(total_timesteps > 0, "total_timesteps", "must be positive");
    require(batch_size > 0, "batch_size", "must be positive");
    require(buffer_capacity >= batch_size, "buffer_capacity", "must be at least batch_size");
    require(lr > 0, "lr", "must be positive");
    require(gamma >= 0 && gamma <= 1, "gamma", "must lie in [0, 1]");
    require(eps_start >= 0 && eps_start <= 1, "eps_start", "must lie in [0, 1]");
    require(eps_finish >= 0 && eps_finish <= eps_start, "eps_finish", "must lie in [0, eps_start]");
    require(eps_anneal_steps > 0, "eps_anneal_steps", "must be positive");
    require(target_update_interval > 0, "target_update_interval", "must be positive");
    require(delta_T > 0, "delta_T", "must be positive");
    require(subtask_update_start > 0, "subtask_update_start", "must be positive");
    require(J > 0 && J <= env::kNumActions, "J", "must lie in [1, number of actions]");
    require(test_interval > 0, "test_interval", "must be positive");
    require(test_episodes > 0, "test_episodes", "must be positive");
    require(optimizer == "rmsprop", "optimizer", "only 'rmsprop' is supported");
    require(rmsprop_alpha > 0 && rmsprop_alpha < 1, "rmsprop_alpha", "must lie in (0, 1)");
    require(rmsprop_eps > 0, "rmsprop_eps", "must be positive");
    require(grad_clip > 0, "grad_clip", "must be positive");
    require(checkpoint_interval > 0, "checkpoint_interval", "must be positive");
    require(trace_episodes >= 0, "trace_episodes", "must be nonnegative");
    require(diffusion_steps > 1, "diffusion_steps", "must be at least 2");
    require(beta_start > 0 && beta_start < beta_end && beta_end < 1, "beta_start", "need 0 < beta_start < beta_end < 1");
    require(latent_dim > 0, "latent_dim", "must be positive");
    require(lambda_dr >= 0, "lambda_dr", "must be nonnegative");
    require(eta_d >= 0, "eta_d", "must be nonnegative");
    require(mixer == "attention" || mixer == "monotonic_hypernet", "mixer",
            "must be 'attention' or 'monotonic_hypernet'");
    require(mixer_heads > 0, "mixer_heads", "must be positive");
    require(mixer_key_dim > 0, "mixer_key_dim", "must be positive");
    env_config().validate();
}

env::EnvConfig TrainConfig::env_config() const {
    env::EnvConfig c;
    c.grid_size = grid_size;
    c.n_agents = n_agents;
    c.n_foods = n_foods;
    c.max_player_level = max_player_level;
    c.max_episode_length = max_episode_length;
    c.move_penalty = move_penalty;
    c.seed = seed;
    return c;
}

mixing::MixerKind TrainConfig::mixer_kind() const {
    return mixer == "attention" ? mixing::MixerKind::kAttention : mixing::MixerKind::kMonotonicHypernet;
}

void set_field(TrainConfig& config, const std::string& key, const std::string& value) {
    const auto& table = fields();
    auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) { return f.name == key; });
    if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
    it->set(config, value);
}

TrainConfig parse_config(const std::string& text) {
    TrainConfig config;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value', got '" + line + "'");
        }
        set_field(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    config.validate();
    return config;
}

TrainConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_config(buffer.str());
}

std::string to_text(const TrainConfig& config) {
    std::string out;
    for (const auto& f : fields()) out += f.name + " = " + f.get(config) + "\n";
    return out;
}

double epsilon_at(std::int64_t t, const TrainConfig& config) {
    if (t >= config.eps_anneal_steps) return config.eps_finish;
    const double frac = static_cast<double>(std::max<std::int64_t>(t, 0)) / static_cast<double>(config.eps_anneal_steps);
    return config.eps_start + frac * (config.eps_finish - config.eps_start);
}

}  // namespace cd3t::trainer
