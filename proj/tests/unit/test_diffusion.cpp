#include <gtest/gtest.h>

#include <cmath>

#include <ATen/CPUGeneratorImpl.h>
#include <torch/torch.h>

#include "cd3t/diffusion/noise_schedule.hpp"
#include "cd3t/diffusion/representation_model.hpp"
#include "cd3t/errors.hpp"
#include "support/gradcheck.hpp"

using namespace cd3t;
using namespace cd3t::diffusion;

namespace {

torch::Generator make_generator(std::uint64_t seed) { return at::detail::createCPUGenerator(seed); }

RepresentationConfig small_config(int obs_dim = 6, int agents = 2) {
    RepresentationConfig c;
    c.obs_dim = obs_dim;
    c.n_agents = agents;
    c.latent_dim = 4;
    c.hidden_dim = 8;
    c.cond_tokens = 2;
    c.attention_heads = 2;
    c.residual_blocks = 1;
    c.predictor_hidden = 8;
    return c;
}

RepresentationBatch random_batch(const RepresentationConfig& c, int64_t m, std::uint64_t seed,
                                 torch::Dtype dtype = torch::kFloat32) {
    auto gen = make_generator(seed);
    auto opts = torch::TensorOptions().dtype(dtype);
    RepresentationBatch b;
    b.obs = torch::randn({m, c.n_agents, c.obs_dim}, gen, opts);
    b.actions = torch::randint(0, c.n_actions, {m, c.n_agents}, gen, torch::TensorOptions().dtype(torch::kLong));
    b.reward = torch::randn({m}, gen, opts);
    b.next_obs = torch::randn({m, c.n_agents, c.obs_dim}, gen, opts);
    return b;
}

std::vector<torch::Tensor> leaf_parameters(torch::nn::Module& module) {
    std::vector<torch::Tensor> out;
    for (auto& p : module.parameters()) out.push_back(p);
    return out;
}

}  // namespace

TEST(NoiseSchedule, SingleStepDegenerate) {
    auto s = NoiseSchedule::linear(1, 1e-4, 0.02);
    EXPECT_EQ(s.steps(), 1);
    EXPECT_DOUBLE_EQ(s.beta(1), 1e-4);
    EXPECT_DOUBLE_EQ(s.alpha_bar(1), 1.0 - 1e-4);
}

TEST(NoiseSchedule, DefaultProductMatchesDirectOracle) {
    auto s = NoiseSchedule::linear(100, 1e-4, 0.02);
    double product = 1.0;
    for (int k = 0; k < 100; ++k) product *= 1.0 - (1e-4 + (0.02 - 1e-4) * k / 99.0);
    EXPECT_NEAR(s.alpha_bar(100), product, 1e-12);
    EXPECT_GT(s.alpha_bar(100), 0.3);
    EXPECT_LT(s.alpha_bar(100), 0.4);
    EXPECT_DOUBLE_EQ(s.beta(100), 0.02);
}

TEST(NoiseSchedule, Identities) {
    for (int steps : {2, 7, 100}) {
        auto s = NoiseSchedule::linear(steps, 1e-3, 0.05);
        for (int k = 1; k <= steps; ++k) {
            EXPECT_GT(s.beta(k), 0.0);
            EXPECT_LT(s.beta(k), 1.0);
            EXPECT_DOUBLE_EQ(s.alpha(k), 1.0 - s.beta(k));
            if (k > 1) {
                EXPECT_GE(s.beta(k), s.beta(k - 1));
                EXPECT_LT(s.alpha_bar(k), s.alpha_bar(k - 1));
                EXPECT_DOUBLE_EQ(s.alpha_bar(k), s.alpha_bar(k - 1) * s.alpha(k));
            }
        }
    }
}

TEST(NoiseSchedule, RejectsBadBounds) {
    EXPECT_THROW(NoiseSchedule::linear(0, 1e-4, 0.02), ConfigError);
    EXPECT_THROW(NoiseSchedule::linear(10, 0.0, 0.02), ConfigError);
    EXPECT_THROW(NoiseSchedule::linear(10, 0.03, 0.02), ConfigError);
    EXPECT_THROW(NoiseSchedule::linear(10, 1e-4, 1.0), ConfigError);
    auto s = NoiseSchedule::linear(10, 1e-4, 0.02);
    EXPECT_THROW(s.alpha_bar(0), InputError);
    EXPECT_THROW(s.alpha_bar(11), InputError);
}

TEST(QSample, ZeroInputAndZeroNoise) {
    auto s = NoiseSchedule::linear(100, 1e-4, 0.02);
    auto eps = torch::randn({5, 20}, torch::kFloat64);
    auto z0 = torch::randn({5, 20}, torch::kFloat64);
    for (int k : {1, 37, 100}) {
        EXPECT_TRUE(torch::allclose(q_sample(torch::zeros_like(eps), k, eps, s), std::sqrt(1 - s.alpha_bar(k)) * eps));
        EXPECT_TRUE(torch::allclose(q_sample(z0, k, torch::zeros_like(z0), s), std::sqrt(s.alpha_bar(k)) * z0));
    }
    EXPECT_THROW(q_sample(z0, 0, eps, s), InputError);
    EXPECT_THROW(q_sample(z0, 101, eps, s), InputError);
}

TEST(QSample, BatchedMatchesPerRow) {
    auto s = NoiseSchedule::linear(50, 1e-4, 0.02);
    auto z0 = torch::randn({4, 3}, torch::kFloat64);
    auto eps = torch::randn({4, 3}, torch::kFloat64);
    auto k = torch::tensor({1, 10, 25, 50}, torch::kLong);
    auto batched = q_sample(z0, k, eps, s);
    for (int i = 0; i < 4; ++i) {
        auto row = q_sample(z0[i], k[i].item<int>(), eps[i], s);
        EXPECT_TRUE(torch::allclose(batched[i], row, 0, 1e-14));
    }
}

TEST(QSample, ClosedFormMatchesIteratedNoising) {
    auto s = NoiseSchedule::linear(100, 1e-4, 0.02);
    auto gen = make_generator(3);
    const int64_t draws = 10000;
    const int d = 20;
    auto z0 = torch::linspace(-2.0, 2.0, d, torch::kFloat64).expand({draws, d}).contiguous();
    auto closed = q_sample(z0, 100, torch::randn({draws, d}, gen, torch::kFloat64), s);
    auto iterated = z0.clone();
    for (int k = 1; k <= 100; ++k) iterated = q_step(iterated, k, torch::randn({draws, d}, gen, torch::kFloat64), s);
    auto mean_gap = (closed.mean(0) - iterated.mean(0)).abs().max().item<double>();
    auto var_gap = ((closed.var(0) - iterated.var(0)).abs() / iterated.var(0)).max().item<double>();
    EXPECT_LE(mean_gap, 0.05);
    EXPECT_LE(var_gap, 0.10);
}

TEST(ReverseStep, SingleStepClosedForm) {
    auto s = NoiseSchedule::linear(1, 1e-4, 0.02);
    auto v = torch::tensor({1.0, -2.0, 0.5}, torch::kFloat64);
    auto gen = make_generator(0);
    auto z0 = reverse_sample([](const torch::Tensor& z, int) { return torch::zeros_like(z); }, v, s, gen);
    EXPECT_TRUE(torch::allclose(z0, v / std::sqrt(s.alpha(1)), 0, 1e-14));
}

TEST(ReverseStep, SamplesFiniteAndSeedDeterministic) {
    auto c = small_config();
    torch::manual_seed(0);
    RepresentationModel model(c);
    auto s = NoiseSchedule::linear(20, 1e-4, 0.02);
    auto ctx = torch::randn({3, c.context_dim()});
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        auto g = make_generator(seed);
        auto z = model->reverse_sample(ctx, s, g);
        ASSERT_TRUE(torch::isfinite(z).all().item<bool>());
    }
    auto g1 = make_generator(9), g2 = make_generator(9);
    EXPECT_TRUE(torch::equal(model->reverse_sample(ctx, s, g1), model->reverse_sample(ctx, s, g2)));
}

TEST(Encoder, PureFiniteAndRejectsNonOneHot) {
    torch::manual_seed(1);
    RepresentationModel model(RepresentationConfig{});
    auto z = model->action_representations();
    EXPECT_EQ(z.sizes(), (std::vector<int64_t>{6, 20}));
    EXPECT_TRUE(torch::isfinite(z).all().item<bool>());
    auto oh = torch::zeros({6});
    oh[2] = 1;
    EXPECT_TRUE(torch::equal(model->encode(oh), model->encode(oh)));
    EXPECT_TRUE(torch::allclose(model->encode(oh), z[2], 1e-6, 1e-7));
    EXPECT_THROW(model->encode(torch::full({6}, 0.5)), InputError);
    EXPECT_THROW(model->encode(torch::ones({6})), InputError);
    EXPECT_THROW(model->encode(torch::zeros({5})), InputError);
}

TEST(Denoiser, ShapesPurityAndErrors) {
    auto c = small_config();
    torch::manual_seed(2);
    RepresentationModel model(c);
    auto z = torch::randn({5, c.latent_dim});
    auto k = torch::randint(1, 21, {5}, torch::kLong);
    auto ctx = torch::randn({5, c.context_dim()});
    auto out = model->denoise(z, k, ctx);
    EXPECT_EQ(out.sizes(), z.sizes());
    EXPECT_TRUE(torch::equal(out, model->denoise(z, k, ctx)));
    EXPECT_THROW(model->denoise(z, k, torch::randn({5, c.context_dim() + 1})), InputError);
    EXPECT_THROW(model->denoise(torch::randn({5, c.latent_dim + 1}), k, ctx), InputError);
    EXPECT_THROW(model->denoise(z, k.slice(0, 0, 4), ctx), InputError);
}

TEST(Predictors, Shapes) {
    auto c = small_config();
    torch::manual_seed(3);
    RepresentationModel model(c);
    auto z = torch::randn({4, c.latent_dim});
    auto ctx = torch::randn({4, c.context_dim()});
    EXPECT_EQ(model->predict_next_obs(z, ctx).sizes(), (std::vector<int64_t>{4, c.obs_dim}));
    EXPECT_EQ(model->predict_reward(z, ctx).sizes(), (std::vector<int64_t>{4}));
    EXPECT_TRUE(torch::equal(model->predict_reward(z, ctx), model->predict_reward(z, ctx)));
    EXPECT_THROW(model->predict_reward(z, torch::randn({4, 3})), InputError);
}

TEST(Contexts, OtherAgentsOneHotAppended) {
    auto obs = torch::arange(2 * 3 * 2, torch::kFloat32).view({2, 3, 2});
    auto actions = torch::tensor({{0, 1, 2}, {3, 4, 5}}, torch::kLong);
    auto ctx = build_contexts(obs, actions, 6);
    ASSERT_EQ(ctx.sizes(), (std::vector<int64_t>{2, 3, 2 + 2 * 6}));
    EXPECT_TRUE(torch::equal(ctx[0][1].slice(0, 0, 2), obs[0][1]));
    auto others = ctx[1][0].slice(0, 2);
    EXPECT_EQ(others[4].item<float>(), 1.0f);
    EXPECT_EQ(others[6 + 5].item<float>(), 1.0f);
    EXPECT_EQ(others.sum().item<float>(), 2.0f);
}

TEST(DiffusionLoss, ZeroDenoiserGivesLatentDimension) {
    RepresentationConfig c;
    c.obs_dim = 5;
    torch::manual_seed(4);
    RepresentationModel model(c);
    {
        torch::NoGradGuard guard;
        for (auto& item : model->denoiser->named_parameters()) {
            if (item.key().rfind("output.", 0) == 0) item.value().zero_();
        }
    }
    auto s = NoiseSchedule::linear(100, 1e-4, 0.02);
    auto gen = make_generator(5);
    auto actions = torch::randint(0, 6, {1024}, gen, torch::TensorOptions().dtype(torch::kLong));
    auto ctx = torch::randn({1024, c.context_dim()}, gen);
    const double loss = model->diffusion_loss(actions, ctx, s, gen).item<double>();
    // ||eps||^2 has variance 2d, so the batch mean has std sqrt(40/1024) ~ 0.2.
    EXPECT_NEAR(loss, 20.0, 1.0);
    EXPECT_THROW(model->diffusion_loss(torch::zeros({0}, torch::kLong), ctx.slice(0, 0, 0), s, gen), InputError);
}

TEST(RepresentationLoss, DecomposesIntoWeightedParts) {
    auto c = small_config();
    torch::manual_seed(6);
    RepresentationModel model(c);
    auto s = NoiseSchedule::linear(20, 1e-4, 0.02);
    auto batch = random_batch(c, 7, 1);
    auto gen = make_generator(2);
    auto draw = sample_draw(7 * c.n_agents, c.latent_dim, s, gen, torch::TensorOptions());
    auto parts = model->loss(batch, draw, s);
    auto prediction = model->prediction_loss(batch);
    auto ctx = build_contexts(batch.obs, batch.actions, c.n_actions);
    auto diffusion = model->diffusion_loss(batch.actions.reshape({-1}), ctx.reshape({-1, ctx.size(-1)}), draw, s);
    EXPECT_DOUBLE_EQ(parts.prediction.item<double>(), prediction.item<double>());
    EXPECT_DOUBLE_EQ(parts.diffusion.item<double>(), diffusion.item<double>());
    EXPECT_NEAR(parts.total.item<double>(), prediction.item<double>() + 0.1 * diffusion.item<double>(), 1e-5);
    EXPECT_GE(parts.total.item<double>(), 0.0);
}

TEST(RepresentationLoss, PredictionFormulaOracle) {
    auto next = torch::tensor({{{1.0, 2.0}, {0.0, 0.0}}}, torch::kFloat64);
    auto next_hat = torch::tensor({{{1.5, 2.0}, {0.0, -1.0}}}, torch::kFloat64);
    auto reward = torch::tensor({0.3}, torch::kFloat64);
    auto reward_hat = torch::tensor({{0.1, 0.3}}, torch::kFloat64);
    // 0.25 + 1 + 10 * 0.04
    EXPECT_NEAR(prediction_loss(next_hat, next, reward_hat, reward, 10.0).item<double>(), 1.65, 1e-12);
    EXPECT_DOUBLE_EQ(prediction_loss(next, next, reward.unsqueeze(-1).expand({1, 2}), reward, 10.0).item<double>(), 0.0);
    EXPECT_DOUBLE_EQ(noise_prediction_loss(next[0], next[0]).item<double>(), 0.0);
}

TEST(RepresentationLoss, AblationOmitsDiffusionPart) {
    auto c = small_config();
    c.use_diffusion = false;
    RepresentationModel model(c);
    EXPECT_TRUE(model->denoiser.is_empty());
    auto s = NoiseSchedule::linear(20, 1e-4, 0.02);
    auto gen = make_generator(1);
    auto parts = model->loss(random_batch(c, 3, 2), s, gen);
    EXPECT_FALSE(parts.diffusion.defined());
    EXPECT_DOUBLE_EQ(parts.total.item<double>(), parts.prediction.item<double>());
    EXPECT_THROW(model->loss(random_batch(c, 0, 2), s, gen), InputError);
}

TEST(Gradients, DenoiserOutputNorm) {
    auto c = small_config();
    torch::manual_seed(7);
    RepresentationModel model(c);
    model->to(torch::kFloat64);
    auto z = torch::randn({3, c.latent_dim}, torch::kFloat64);
    auto k = torch::tensor({1, 5, 17}, torch::kLong);
    auto ctx = torch::randn({3, c.context_dim()}, torch::kFloat64);
    auto report = test_support::gradcheck([&] { return model->denoise(z, k, ctx).pow(2).sum(); },
                                     leaf_parameters(*model->denoiser), 4, 1);
    EXPECT_LE(report.max_relative_error, 1e-4);
    EXPECT_GT(report.coordinates, 50);
}

TEST(Gradients, DiffusionAndRepresentationLosses) {
    auto c = small_config();
    torch::manual_seed(8);
    RepresentationModel model(c);
    model->to(torch::kFloat64);
    auto s = NoiseSchedule::linear(20, 1e-4, 0.02);
    auto batch = random_batch(c, 4, 3, torch::kFloat64);
    auto gen = make_generator(4);
    auto draw = sample_draw(4 * c.n_agents, c.latent_dim, s, gen, torch::TensorOptions().dtype(torch::kFloat64));
    auto ctx = build_contexts(batch.obs, batch.actions, c.n_actions);
    auto params = leaf_parameters(*model);
    auto diffusion = test_support::gradcheck(
        [&] { return model->diffusion_loss(batch.actions.reshape({-1}), ctx.reshape({-1, ctx.size(-1)}), draw, s); },
        params, 3, 2, 1e-3);
    EXPECT_LE(diffusion.max_relative_error, 1e-4);
    auto total = test_support::gradcheck([&] { return model->loss(batch, draw, s).total; }, params, 3, 3, 1e-3);
    EXPECT_LE(total.max_relative_error, 1e-4);
}

TEST(Training, DiffusionLossHalvesOnFixedData) {
    auto c = small_config();
    torch::manual_seed(9);
    RepresentationModel model(c);
    auto s = NoiseSchedule::linear(20, 1e-4, 0.02);
    auto gen = make_generator(10);
    auto actions = torch::randint(0, 6, {64}, gen, torch::TensorOptions().dtype(torch::kLong));
    auto ctx = torch::randn({64, c.context_dim()}, gen);
    auto eval_gen = make_generator(11);
    auto eval_draw = sample_draw(64 * 8, c.latent_dim, s, eval_gen, torch::TensorOptions());
    auto eval_loss = [&] {
        torch::NoGradGuard guard;
        return model->diffusion_loss(actions.repeat({8}), ctx.repeat({8, 1}), eval_draw, s).item<double>();
    };
    const double initial = eval_loss();
    torch::optim::Adam opt(model->parameters(), torch::optim::AdamOptions(1e-3));
    for (int step = 0; step < 2000; ++step) {
        opt.zero_grad();
        model->diffusion_loss(actions, ctx, s, gen).backward();
        opt.step();
    }
    EXPECT_LT(eval_loss(), 0.5 * initial);
}

TEST(Training, IdentityDynamicsAndConstantReward) {
    auto c = small_config();
    torch::manual_seed(12);
    RepresentationModel model(c);
    auto batch = random_batch(c, 64, 13);
    batch.next_obs = batch.obs.clone();
    batch.reward = torch::full({64}, 0.5);
    torch::optim::Adam opt(model->parameters(), torch::optim::AdamOptions(3e-3));
    for (int step = 0; step < 1500; ++step) {
        opt.zero_grad();
        model->prediction_loss(batch).backward();
        opt.step();
    }
    torch::NoGradGuard guard;
    auto ctx = build_contexts(batch.obs, batch.actions, c.n_actions);
    auto z = model->encode_ids(batch.actions);
    const double obs_mse = (model->predict_next_obs(z, ctx) - batch.obs).pow(2).mean().item<double>();
    const double reward_gap = (model->predict_reward(z, ctx) - 0.5).abs().mean().item<double>();
    EXPECT_LT(obs_mse, 0.05);
    EXPECT_LT(reward_gap, 0.02);
}

TEST(Training, EquivalentActionsEncodeCloser) {
    // Actions 1 and 2 have identical effects; every other action has its own.
    auto c = small_config(4, 1);
    c.latent_dim = 8;
    torch::manual_seed(14);
    RepresentationModel model(c);
    auto s = NoiseSchedule::linear(20, 1e-4, 0.02);
    auto gen = make_generator(15);
    const int64_t m = 256;
    auto obs = torch::randn({m, 1, c.obs_dim}, gen);
    auto actions = torch::randint(0, 6, {m, 1}, gen, torch::TensorOptions().dtype(torch::kLong));
    auto effects = torch::tensor({{0.0, 0.0, 0.0, 0.0},
                                  {1.0, 0.0, 0.0, 0.0},
                                  {1.0, 0.0, 0.0, 0.0},
                                  {0.0, 1.0, 0.0, 0.0},
                                  {0.0, 0.0, 1.0, 0.0},
                                  {0.0, 0.0, 0.0, 1.0}});
    auto rewards = torch::tensor({0.0, 0.2, 0.2, -0.1, 0.4, 0.1});
    RepresentationBatch batch{obs, actions, rewards.index_select(0, actions.view({-1})),
                              obs + effects.index_select(0, actions.view({-1})).unsqueeze(1)};
    torch::optim::Adam opt(model->parameters(), torch::optim::AdamOptions(1e-3));
    for (int step = 0; step < 1500; ++step) {
        opt.zero_grad();
        model->loss(batch, s, gen).total.backward();
        opt.step();
    }
    torch::NoGradGuard guard;
    auto z = model->action_representations();
    const double pair = (z[1] - z[2]).norm().item<double>();
    for (int a = 0; a < 6; ++a) {
        for (int b : {1, 2}) {
            if (a == 1 || a == 2) continue;
            EXPECT_LT(pair, (z[a] - z[b]).norm().item<double>()) << "actions " << a << " and " << b;
        }
    }
}

TEST(Training, ReverseSamplesConcentrateOnSingleMode) {
    auto c = small_config();
    torch::manual_seed(16);
    RepresentationModel model(c);
    auto s = NoiseSchedule::linear(20, 1e-4, 0.02);
    auto gen = make_generator(17);
    auto ctx = torch::randn({1, c.context_dim()}, gen).expand({128, c.context_dim()}).contiguous();
    auto actions = torch::full({128}, 3, torch::kLong);
    torch::optim::Adam opt(model->denoiser->parameters(), torch::optim::AdamOptions(2e-3));
    for (int step = 0; step < 2000; ++step) {
        opt.zero_grad();
        model->diffusion_loss(actions, ctx, s, gen).backward();
        opt.step();
    }
    torch::NoGradGuard guard;
    auto target = model->action_representations()[3];
    auto samples = model->reverse_sample(ctx, s, gen);
    EXPECT_LT((samples - target).norm(2, {1}).mean().item<double>(), 1.0);
}
