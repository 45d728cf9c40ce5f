#include <benchmark/benchmark.h>

#include <ATen/CPUGeneratorImpl.h>
#include <torch/torch.h>

#include "cd3t/agents/agent_network.hpp"
#include "cd3t/diffusion/noise_schedule.hpp"
#include "cd3t/diffusion/representation_model.hpp"
#include "cd3t/mixing/mixers.hpp"

using namespace cd3t;

static void BM_AgentStep(benchmark::State& state) {
    torch::NoGradGuard no_grad;
    torch::manual_seed(0);
    agents::AgentNetwork net(agents::AgentConfig{});
    const auto n = state.range(0);
    auto h = torch::zeros({n, 64});
    auto obs = torch::randn({n, 77});
    auto prev = torch::zeros({n, 6});
    auto reps = torch::randn({6, 20});
    for (auto _ : state) {
        auto next = net->policy_encoder(h, obs, prev);
        auto q = agents::policy_q_values(net->policy_latent(next), reps);
        benchmark::DoNotOptimize(q.data_ptr());
    }
}
BENCHMARK(BM_AgentStep)->Arg(3)->Arg(96);

static void BM_AgentUnrollBackward(benchmark::State& state) {
    torch::manual_seed(0);
    agents::AgentNetwork net(agents::AgentConfig{});
    auto obs = torch::randn({96, 50, 77});
    auto prev = torch::zeros({96, 50, 6});
    auto reps = torch::randn({6, 20});
    for (auto _ : state) {
        net->zero_grad();
        auto q = agents::policy_q_values(net->policy_latent(net->policy_encoder->unroll(obs, prev)), reps);
        q.sum().backward();
    }
}
BENCHMARK(BM_AgentUnrollBackward)->Unit(benchmark::kMillisecond);

static void BM_Mixer(benchmark::State& state) {
    torch::NoGradGuard no_grad;
    torch::manual_seed(0);
    auto mixer = mixing::make_mixer(static_cast<mixing::MixerKind>(state.range(0)), mixing::MixerConfig{});
    auto q = torch::randn({32, 50, 3});
    auto reps = torch::randn({32, 50, 3, 20});
    auto s = torch::randn({32, 50, 22});
    for (auto _ : state) {
        auto total = mixer->forward(q, reps, s);
        benchmark::DoNotOptimize(total.data_ptr());
    }
    state.SetLabel(mixing::to_string(static_cast<mixing::MixerKind>(state.range(0))));
}
BENCHMARK(BM_Mixer)->Arg(static_cast<int>(mixing::MixerKind::kAttention))
    ->Arg(static_cast<int>(mixing::MixerKind::kMonotonicHypernet));

static void BM_RepresentationLoss(benchmark::State& state) {
    torch::manual_seed(0);
    diffusion::RepresentationModel model(diffusion::RepresentationConfig{});
    auto schedule = diffusion::NoiseSchedule::linear(100, 1e-4, 0.02);
    diffusion::RepresentationBatch batch;
    const int b = 256;
    batch.obs = torch::randn({b, 3, 77});
    batch.actions = torch::randint(0, 6, {b, 3}, torch::kLong);
    batch.next_obs = torch::randn({b, 3, 77});
    batch.reward = torch::randn({b});
    torch::Generator gen = at::detail::createCPUGenerator(0);
    for (auto _ : state) {
        model->zero_grad();
        auto parts = model->loss(batch, schedule, gen);
        parts.total.backward();
    }
}
BENCHMARK(BM_RepresentationLoss)->Unit(benchmark::kMillisecond);
