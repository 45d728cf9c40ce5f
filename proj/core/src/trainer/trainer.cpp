#include "cd3t/trainer/trainer.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "cd3t/env/trace.hpp"
#include "cd3t/errors.hpp"
#include "cd3t/mixing/td_loss.hpp"

namespace cd3t::trainer {

namespace fs = std::filesystem;

namespace {

std::string format_number(double value) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, ptr);
}

std::string format_optional(const std::optional<double>& value) { return value ? format_number(*value) : std::string(); }

std::string rng_state(const std::mt19937_64& rng) {
    std::ostringstream out;
    out << rng;
    return out.str();
}

void set_rng_state(std::mt19937_64& rng, const std::string& state) {
    std::istringstream in(state);
    in >> rng;
    if (!in) throw LoadError("corrupt random generator state in checkpoint");
}

torch::optim::RMSpropOptions optimizer_options(const TrainConfig& c) {
    return torch::optim::RMSpropOptions(c.lr).alpha(c.rmsprop_alpha).eps(c.rmsprop_eps);
}

void write_module(torch::serialize::OutputArchive& archive, const std::string& key, torch::nn::Module& module) {
    torch::serialize::OutputArchive sub;
    module.save(sub);
    archive.write(key, sub);
}

void write_optimizer(torch::serialize::OutputArchive& archive, const std::string& key, torch::optim::Optimizer& opt) {
    torch::serialize::OutputArchive sub;
    opt.save(sub);
    archive.write(key, sub);
}

}  // namespace

std::pair<double, double> mean_std(const std::vector<double>& values) {
    if (values.empty()) return {0.0, 0.0};
    const double n = static_cast<double>(values.size());
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double sq = 0.0;
    for (double v : values) sq += (v - mean) * (v - mean);
    return {mean, std::sqrt(sq / n)};
}

diffusion::RepresentationBatch representation_batch(const data::EpisodeBatch& batch) {
    const auto b = batch.batch_size();
    const auto steps = batch.max_length();
    const auto n = batch.obs.size(2);
    const auto o = batch.obs.size(3);
    auto idx = torch::nonzero(batch.valid.reshape({-1}) > 0).squeeze(-1);
    diffusion::RepresentationBatch out;
    out.obs = batch.obs.slice(1, 0, steps).reshape({b * steps, n, o}).index_select(0, idx);
    out.next_obs = batch.obs.slice(1, 1, steps + 1).reshape({b * steps, n, o}).index_select(0, idx);
    out.actions = batch.actions.reshape({b * steps, n}).index_select(0, idx);
    out.reward = batch.reward.reshape({-1}).index_select(0, idx);
    return out;
}

Trainer::Trainer(TrainConfig config)
    : config_((config.validate(), std::move(config))),
      env_config_(config_.env_config()),
      schedule_(diffusion::NoiseSchedule::linear(config_.diffusion_steps, config_.beta_start, config_.beta_end)),
      buffer_(static_cast<std::size_t>(config_.buffer_capacity)),
      decomposition_(subtask::DecompositionConfig{config_.J, config_.subtask_update_start,
                                                  env::derive_seed(config_.seed, 5, 0), 0}),
      action_rng_(env::derive_seed(config_.seed, 3, 0)),
      sample_rng_(env::derive_seed(config_.seed, 4, 0)),
      diffusion_generator_(at::detail::createCPUGenerator(env::derive_seed(config_.seed, 6, 0))) {
    torch::set_num_threads(1);
    torch::manual_seed(config_.seed);

    diffusion::RepresentationConfig rc;
    rc.n_actions = env::kNumActions;
    rc.latent_dim = config_.latent_dim;
    rc.obs_dim = env::kObservationSize;
    rc.n_agents = config_.n_agents;
    rc.lambda_dr = config_.lambda_dr;
    rc.eta_d = config_.eta_d;
    rc.use_diffusion = config_.use_diffusion;
    representation_ = diffusion::RepresentationModel(rc);

    mixing::ValueNetworksConfig vc;
    vc.agent.obs_dim = env::kObservationSize;
    vc.agent.n_actions = env::kNumActions;
    vc.agent.latent_dim = config_.latent_dim;
    vc.mixer.n_agents = config_.n_agents;
    vc.mixer.state_dim = env_config_.state_size();
    vc.mixer.rep_dim = config_.latent_dim;
    vc.mixer.heads = config_.mixer_heads;
    vc.mixer.key_dim = config_.mixer_key_dim;
    vc.mixer_kind = config_.mixer_kind();
    live_ = mixing::ValueNetworks(vc);
    targets_ = mixing::make_targets(live_, 0);

    representation_optimizer_ =
        std::make_unique<torch::optim::RMSprop>(representation_->parameters(), optimizer_options(config_));
    policy_optimizer_ = std::make_unique<torch::optim::RMSprop>(live_->policy_parameters(), optimizer_options(config_));
    selector_optimizer_ =
        std::make_unique<torch::optim::RMSprop>(live_->selector_parameters(), optimizer_options(config_));
}

torch::Tensor Trainer::action_representations() {
    if (decomposed()) return subtask::to_tensor(subtasks().action_representations, torch::kFloat32);
    torch::NoGradGuard no_grad;
    return representation_->action_representations().detach();
}

agents::HierarchicalController Trainer::make_controller() {
    agents::HierarchicalController controller(live_->agent, config_.n_agents, config_.delta_T);
    controller.set_action_representations(action_representations());
    if (decomposed()) controller.set_subtasks(subtasks());
    return controller;
}

data::Episode Trainer::run_episode(agents::HierarchicalController& controller, unsigned int layout_seed,
                                   double epsilon, std::mt19937_64& rng, int episode_index,
                                   const StepObserver& observer, EpisodeStats& stats) {
    env::LbfEnv env(env_config_);
    auto observations = env.reset(layout_seed);
    controller.begin_episode();

    data::Episode ep;
    ep.n_agents = config_.n_agents;
    ep.obs_dim = env::kObservationSize;
    ep.state_dim = env_config_.state_size();
    ep.n_actions = env::kNumActions;

    std::vector<env::ActionMask> available(static_cast<std::size_t>(config_.n_agents));
    auto record_inputs = [&](const std::vector<env::Observation>& obs) {
        for (const auto& o : obs) ep.obs.insert(ep.obs.end(), o.begin(), o.end());
        auto s = env.state_vector();
        ep.state.insert(ep.state.end(), s.begin(), s.end());
        for (int i = 0; i < config_.n_agents; ++i) {
            available[static_cast<std::size_t>(i)] = env.available(i);
            for (bool a : available[static_cast<std::size_t>(i)]) ep.avail.push_back(a ? 1 : 0);
        }
    };

    for (int t = 0;; ++t) {
        record_inputs(observations);
        auto decision = controller.act(observations, available, t, epsilon, rng);
        ep.subtasks.insert(ep.subtasks.end(), decision.subtasks.begin(), decision.subtasks.end());
        ep.actions.insert(ep.actions.end(), decision.actions.begin(), decision.actions.end());
        const env::GlobalState before = env.state();
        auto result = env.step(decision.actions);

        stats.episode_return += result.reward;
        stats.fallbacks += decision.fallbacks;
        stats.mask_size_total += decision.mask_size_total;
        stats.agent_steps += config_.n_agents;
        if (observer) observer(StepView{episode_index, t, before, available, decision, result.reward, result.done});

        ep.reward.push_back(static_cast<float>(result.reward));
        ep.done.push_back(result.done ? 1 : 0);
        observations = std::move(result.observations);
        if (result.done) {
            record_inputs(observations);
            ep.subtasks.insert(ep.subtasks.end(), decision.subtasks.begin(), decision.subtasks.end());
            ep.length = t + 1;
            break;
        }
    }
    stats.success = env.state().foods_remaining() == 0;
    return ep;
}

IterationMetrics Trainer::train_iteration() {
    IterationMetrics m;
    m.eps = epsilon_at(t_total_, config_);
    auto controller = make_controller();
    EpisodeStats stats;
    auto episode = run_episode(controller, env::derive_seed(config_.seed, kTrainStream, static_cast<std::uint64_t>(episode_)),
                               m.eps, action_rng_, static_cast<int>(episode_), {}, stats);
    m.episode_length = episode.length;
    t_total_ += episode.length;
    ++episode_;
    buffer_.append(std::move(episode));

    m.t_total = t_total_;
    m.episode = episode_;
    m.train_return = stats.episode_return;
    m.fallback_count = stats.fallbacks;

    if (!decomposed()) {
        representation_update(m);
        if (decomposition_.due(t_total_)) {
            torch::NoGradGuard no_grad;
            auto z = subtask::collect_action_representations(*representation_->encoder, env::kNumActions);
            decomposition_.finalize(z, t_total_);
            m.decomposed = true;
        }
    } else {
        value_update(m);
    }
    m.targets_synced = mixing::sync_targets(live_, targets_, episode_, config_.target_update_interval);
    return m;
}

void Trainer::representation_update(IterationMetrics& metrics) {
    auto batch = buffer_.sample(static_cast<std::size_t>(config_.batch_size), sample_rng_);
    if (!batch) return;
    auto samples = representation_batch(*batch);
    representation_optimizer_->zero_grad();
    auto parts = representation_->loss(samples, schedule_, diffusion_generator_);
    parts.total.backward();
    torch::nn::utils::clip_grad_norm_(representation_->parameters(), config_.grad_clip);
    representation_optimizer_->step();
    metrics.loss_prediction = parts.prediction.item<double>();
    if (parts.diffusion.defined()) metrics.loss_diffusion = parts.diffusion.item<double>();
}

void Trainer::value_update(IterationMetrics& metrics) {
    auto batch = buffer_.sample(static_cast<std::size_t>(config_.batch_size), sample_rng_);
    if (!batch) return;
    const auto& set = subtasks();
    auto z = action_representations();
    auto masks = set.mask_tensor();
    auto subtask_reps = set.subtask_rep_tensor(z.options());

    policy_optimizer_->zero_grad();
    auto policy_loss = mixing::policy_td_loss(*batch, live_, targets_.networks, z, masks, config_.gamma);
    policy_loss.backward();
    torch::nn::utils::clip_grad_norm_(live_->policy_parameters(), config_.grad_clip);
    policy_optimizer_->step();
    metrics.loss_policy = policy_loss.item<double>();

    if (mixing::count_decision_points(*batch, config_.delta_T) > 0) {
        selector_optimizer_->zero_grad();
        auto selector_loss =
            mixing::selector_td_loss(*batch, live_, targets_.networks, subtask_reps, config_.delta_T, config_.gamma);
        selector_loss.backward();
        torch::nn::utils::clip_grad_norm_(live_->selector_parameters(), config_.grad_clip);
        selector_optimizer_->step();
        metrics.loss_selector = selector_loss.item<double>();
    }
}

EvalResult Trainer::evaluate(int episodes, unsigned int seed, const StepObserver& observer) {
    if (episodes < 1) throw InputError("evaluation needs at least one episode");
    auto controller = make_controller();
    std::mt19937_64 rng(seed);
    EvalResult result;
    result.episodes = episodes;
    long mask_total = 0;
    long agent_steps = 0;
    int successes = 0;
    for (int i = 0; i < episodes; ++i) {
        EpisodeStats stats;
        run_episode(controller, env::derive_seed(seed, kTestStream, static_cast<std::uint64_t>(i)), 0.0, rng, i,
                    observer, stats);
        result.returns.push_back(stats.episode_return);
        result.fallback_count += stats.fallbacks;
        mask_total += stats.mask_size_total;
        agent_steps += stats.agent_steps;
        if (stats.success) ++successes;
    }
    std::tie(result.return_mean, result.return_std) = mean_std(result.returns);
    result.success_rate = static_cast<double>(successes) / episodes;
    result.mean_subtask_mask_size = agent_steps > 0 ? static_cast<double>(mask_total) / agent_steps : 0.0;
    return result;
}

void Trainer::save_checkpoint(const fs::path& path) {
    torch::serialize::OutputArchive archive;
    archive.write("format_version", torch::tensor(kCheckpointFormatVersion, torch::kLong));
    archive.write("config", c10::IValue(to_text(config_)));
    archive.write("counters", torch::tensor({t_total_, episode_, targets_.last_sync}, torch::kLong));
    write_module(archive, "representation", *representation_);
    write_module(archive, "live", *live_);
    write_module(archive, "target", *targets_.networks);
    write_optimizer(archive, "representation_optimizer", *representation_optimizer_);
    write_optimizer(archive, "policy_optimizer", *policy_optimizer_);
    write_optimizer(archive, "selector_optimizer", *selector_optimizer_);
    if (decomposed()) archive.write("decomposition", c10::IValue(subtask::decomposition_to_json(subtasks())));
    archive.write("action_rng", c10::IValue(rng_state(action_rng_)));
    archive.write("sample_rng", c10::IValue(rng_state(sample_rng_)));
    archive.write("diffusion_rng", diffusion_generator_.get_state());
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    archive.save_to(path.string());
}

std::unique_ptr<Trainer> Trainer::from_checkpoint(const fs::path& path) {
    if (!fs::exists(path)) throw LoadError("checkpoint not found: " + path.string());
    torch::serialize::InputArchive archive;
    try {
        archive.load_from(path.string());
    } catch (const c10::Error& e) {
        throw LoadError("unreadable checkpoint " + path.string() + ": " + e.what_without_backtrace());
    }
    torch::Tensor version;
    if (!archive.try_read("format_version", version)) throw LoadError("checkpoint has no format version");
    const auto found = version.item<std::int64_t>();
    if (found != kCheckpointFormatVersion) {
        throw LoadError("incompatible checkpoint format version " + std::to_string(found) + " (expected " +
                        std::to_string(kCheckpointFormatVersion) + ")");
    }
    try {
        c10::IValue text;
        archive.read("config", text);
        auto trainer = std::make_unique<Trainer>(parse_config(text.toStringRef()));
        trainer->restore(archive);
        return trainer;
    } catch (const c10::Error& e) {
        throw LoadError("corrupt checkpoint " + path.string() + ": " + e.what_without_backtrace());
    }
}

void Trainer::restore(torch::serialize::InputArchive& archive) {
    torch::Tensor counters;
    archive.read("counters", counters);
    t_total_ = counters[0].item<std::int64_t>();
    episode_ = counters[1].item<std::int64_t>();
    targets_.last_sync = counters[2].item<std::int64_t>();

    auto read_module = [&](const std::string& key, torch::nn::Module& module) {
        torch::serialize::InputArchive sub;
        archive.read(key, sub);
        module.load(sub);
    };
    auto read_optimizer = [&](const std::string& key, torch::optim::Optimizer& opt) {
        torch::serialize::InputArchive sub;
        archive.read(key, sub);
        opt.load(sub);
    };
    read_module("representation", *representation_);
    read_module("live", *live_);
    read_module("target", *targets_.networks);
    read_optimizer("representation_optimizer", *representation_optimizer_);
    read_optimizer("policy_optimizer", *policy_optimizer_);
    read_optimizer("selector_optimizer", *selector_optimizer_);

    c10::IValue value;
    if (archive.try_read("decomposition", value)) {
        decomposition_.restore(subtask::decomposition_from_json(value.toStringRef()));
    }
    archive.read("action_rng", value);
    set_rng_state(action_rng_, value.toStringRef());
    archive.read("sample_rng", value);
    set_rng_state(sample_rng_, value.toStringRef());
    torch::Tensor generator_state;
    archive.read("diffusion_rng", generator_state);
    diffusion_generator_.set_state(generator_state);
}

EvalResult evaluate_random(const env::EnvConfig& config, int episodes, unsigned int seed) {
    if (episodes < 1) throw InputError("evaluation needs at least one episode");
    config.validate();
    std::mt19937_64 rng(seed);
    EvalResult result;
    result.episodes = episodes;
    int successes = 0;
    long agent_steps = 0;
    for (int i = 0; i < episodes; ++i) {
        env::LbfEnv env(config);
        env.reset(env::derive_seed(seed, kTestStream, static_cast<std::uint64_t>(i)));
        double total = 0.0;
        while (!env.done()) {
            env::JointAction actions;
            for (int a = 0; a < config.n_agents; ++a) {
                auto mask = env.available(a);
                std::vector<int> choices;
                for (int m = 0; m < env::kNumActions; ++m) {
                    if (mask[static_cast<std::size_t>(m)]) choices.push_back(m);
                }
                std::uniform_int_distribution<std::size_t> pick(0, choices.size() - 1);
                actions.push_back(choices[pick(rng)]);
            }
            total += env.step(actions).reward;
            agent_steps += config.n_agents;
        }
        result.returns.push_back(total);
        if (env.state().foods_remaining() == 0) ++successes;
    }
    std::tie(result.return_mean, result.return_std) = mean_std(result.returns);
    result.success_rate = static_cast<double>(successes) / episodes;
    result.mean_subtask_mask_size = env::kNumActions;
    return result;
}

const std::vector<std::string>& metrics_columns() {
    static const std::vector<std::string> columns = {
        "t_total",        "episode",         "train_return",  "test_return_mean", "test_return_std", "eps",
        "loss_diffusion", "loss_prediction", "loss_selector", "loss_policy",      "fallback_count"};
    return columns;
}

RunResult run_training(const TrainConfig& config, const fs::path& run_dir, const RunOptions& options) {
    auto log = [&](const std::string& line) {
        if (options.log) options.log(line);
    };
    std::unique_ptr<Trainer> trainer =
        options.resume_from ? Trainer::from_checkpoint(*options.resume_from) : std::make_unique<Trainer>(config);
    const TrainConfig& cfg = trainer->config();

    fs::create_directories(run_dir / "checkpoints");
    {
        std::ofstream out(run_dir / "config.txt");
        out << to_text(cfg);
    }

    RunResult result;
    result.metrics_path = run_dir / "metrics.csv";
    const bool append = options.resume_from.has_value() && fs::exists(result.metrics_path);
    std::ofstream metrics(result.metrics_path, append ? std::ios::app : std::ios::trunc);
    if (!metrics) throw InputError("cannot write metrics to " + result.metrics_path.string());
    if (!append) {
        const auto& cols = metrics_columns();
        for (std::size_t i = 0; i < cols.size(); ++i) metrics << (i ? "," : "") << cols[i];
        metrics << '\n';
    }

    auto next_multiple = [&](std::int64_t interval) {
        const auto t = trainer->t_total();
        return t == 0 ? std::int64_t{0} : (t / interval + 1) * interval;
    };
    std::int64_t next_test = next_multiple(cfg.test_interval);
    std::int64_t next_checkpoint = std::max<std::int64_t>(next_multiple(cfg.checkpoint_interval), cfg.checkpoint_interval);

    auto run_tests = [&] {
        while (trainer->t_total() >= next_test) {
            auto eval = trainer->evaluate(cfg.test_episodes, cfg.seed);
            metrics << next_test << ',' << trainer->episodes() << ",," << format_number(eval.return_mean) << ','
                    << format_number(eval.return_std) << ",,,,,," << eval.fallback_count << '\n';
            metrics.flush();
            log("test t=" + std::to_string(next_test) + " return=" + format_number(eval.return_mean) +
                " success=" + format_number(eval.success_rate));
            result.tests.emplace_back(next_test, std::move(eval));
            next_test += cfg.test_interval;
        }
    };
    auto export_decomposition = [&] {
        result.decomposition_path = run_dir / "decomposition.json";
        subtask::write_decomposition(trainer->subtasks(), *result.decomposition_path);
    };

    if (trainer->t_total() == 0) run_tests();
    while (trainer->t_total() < cfg.total_timesteps) {
        auto m = trainer->train_iteration();
        metrics << m.t_total << ',' << m.episode << ',' << format_number(m.train_return) << ",,,"
                << format_number(m.eps) << ',' << format_optional(m.loss_diffusion) << ','
                << format_optional(m.loss_prediction) << ',' << format_optional(m.loss_selector) << ','
                << format_optional(m.loss_policy) << ',' << m.fallback_count << '\n';
        if (m.decomposed) {
            export_decomposition();
            log("decomposition frozen at t=" + std::to_string(m.t_total));
        }
        run_tests();
        if (trainer->t_total() >= next_checkpoint) {
            auto path = run_dir / "checkpoints" / ("ckpt_" + std::to_string(next_checkpoint) + ".pt");
            trainer->save_checkpoint(path);
            result.checkpoints.push_back(path);
            log("checkpoint " + path.string());
            while (next_checkpoint <= trainer->t_total()) next_checkpoint += cfg.checkpoint_interval;
        }
    }
    metrics.flush();

    auto final_path = run_dir / "checkpoints" / "final.pt";
    trainer->save_checkpoint(final_path);
    result.checkpoints.push_back(final_path);
    if (trainer->decomposed() && !result.decomposition_path) export_decomposition();

    if (cfg.trace_episodes > 0) {
        fs::create_directories(run_dir / "traces");
        std::vector<std::unique_ptr<env::TraceWriter>> writers;
        for (int i = 0; i < cfg.trace_episodes; ++i) {
            auto path = run_dir / "traces" / ("episode_" + std::to_string(i) + ".jsonl");
            writers.push_back(std::make_unique<env::TraceWriter>(path));
            result.traces.push_back(path);
        }
        const auto env_cfg = cfg.env_config();
        trainer->evaluate(cfg.trace_episodes, cfg.seed, [&](const StepView& step) {
            env::TraceRecord record;
            record.t = step.t;
            record.state = env::flatten_state(env_cfg, step.state);
            record.actions = step.decision.actions;
            record.subtasks = step.decision.subtasks;
            record.reward = step.reward;
            record.done = step.done;
            writers[static_cast<std::size_t>(step.episode)]->write(record);
        });
    }
    return result;
}

}  // namespace cd3t::trainer
