#include <benchmark/benchmark.h>

#include <random>

#include "cd3t/env/lbf.hpp"

using namespace cd3t;

static void BM_EnvStep(benchmark::State& state) {
    env::EnvConfig cfg;
    std::mt19937_64 rng(0);
    auto s = env::reset_state(cfg, 0);
    env::JointAction actions(static_cast<std::size_t>(cfg.n_agents));
    unsigned int episode = 0;
    for (auto _ : state) {
        if (env::is_terminal(cfg, s)) s = env::reset_state(cfg, ++episode);
        for (int i = 0; i < cfg.n_agents; ++i) {
            const auto avail = env::available_actions(cfg, s, i);
            int a = 0;
            do {
                a = static_cast<int>(rng() % env::kNumActions);
            } while (!avail[static_cast<std::size_t>(a)]);
            actions[static_cast<std::size_t>(i)] = a;
        }
        auto r = env::step_state(cfg, s, actions);
        s = std::move(r.state);
        benchmark::DoNotOptimize(r.reward);
    }
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_EnvStep);

static void BM_Observe(benchmark::State& state) {
    env::EnvConfig cfg;
    auto s = env::reset_state(cfg, 1);
    for (auto _ : state) {
        for (int i = 0; i < cfg.n_agents; ++i) {
            auto o = env::observe(cfg, s, i);
            benchmark::DoNotOptimize(o.data());
        }
    }
}
BENCHMARK(BM_Observe);
