#include "cd3t/diffusion/noise_schedule.hpp"

#include <cmath>
#include <string>

#include "cd3t/errors.hpp"

namespace cd3t::diffusion {

NoiseSchedule NoiseSchedule::linear(int steps, double beta_start, double beta_end) {
    if (steps < 1) throw ConfigError("diffusion step count must be >= 1");
    if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0)) {
        throw ConfigError("beta bounds must satisfy 0 < beta_start <= beta_end < 1");
    }
    NoiseSchedule s;
    s.beta_.resize(static_cast<std::size_t>(steps));
    s.alpha_.resize(s.beta_.size());
    s.alpha_bar_.resize(s.beta_.size());
    double running = 1.0;
    for (int k = 1; k <= steps; ++k) {
        const double frac = steps > 1 ? static_cast<double>(k - 1) / static_cast<double>(steps - 1) : 0.0;
        const auto i = static_cast<std::size_t>(k - 1);
        s.beta_[i] = beta_start + frac * (beta_end - beta_start);
        s.alpha_[i] = 1.0 - s.beta_[i];
        running *= s.alpha_[i];
        s.alpha_bar_[i] = running;
    }
    return s;
}

std::size_t NoiseSchedule::index(int k) const {
    if (k < 1 || k > steps()) {
        throw InputError("diffusion step " + std::to_string(k) + " outside [1, " + std::to_string(steps()) + "]");
    }
    return static_cast<std::size_t>(k - 1);
}

double NoiseSchedule::posterior_variance(int k) const {
    const double abar_prev = k > 1 ? alpha_bar(k - 1) : 1.0;
    return (1.0 - abar_prev) / (1.0 - alpha_bar(k)) * beta(k);
}

namespace {

torch::Tensor gather_table(const std::vector<double>& table, const torch::Tensor& k, const torch::TensorOptions& options,
                           bool complement) {
    if (k.numel() > 0) {
        const auto lo = k.min().item<int64_t>();
        const auto hi = k.max().item<int64_t>();
        if (lo < 1 || hi > static_cast<int64_t>(table.size())) throw InputError("diffusion step outside schedule range");
    }
    std::vector<double> values(table.size());
    for (std::size_t i = 0; i < table.size(); ++i) {
        values[i] = complement ? std::sqrt(1.0 - table[i]) : std::sqrt(table[i]);
    }
    auto lookup = torch::tensor(values, torch::kFloat64);
    return lookup.index_select(0, (k.reshape({-1}) - 1).to(torch::kLong)).reshape(k.sizes()).to(options);
}

}  // namespace

torch::Tensor NoiseSchedule::sqrt_alpha_bar(const torch::Tensor& k, const torch::TensorOptions& options) const {
    return gather_table(alpha_bar_, k, options, false);
}

torch::Tensor NoiseSchedule::sqrt_one_minus_alpha_bar(const torch::Tensor& k, const torch::TensorOptions& options) const {
    return gather_table(alpha_bar_, k, options, true);
}

torch::Tensor q_sample(const torch::Tensor& z0, int k, const torch::Tensor& eps, const NoiseSchedule& schedule) {
    if (z0.sizes() != eps.sizes()) throw InputError("q_sample: z0 and eps shapes differ");
    const double abar = schedule.alpha_bar(k);
    return std::sqrt(abar) * z0 + std::sqrt(1.0 - abar) * eps;
}

torch::Tensor q_sample(const torch::Tensor& z0, const torch::Tensor& k, const torch::Tensor& eps,
                       const NoiseSchedule& schedule) {
    if (z0.sizes() != eps.sizes()) throw InputError("q_sample: z0 and eps shapes differ");
    if (z0.dim() < 1 || k.dim() != 1 || k.size(0) != z0.size(0)) throw InputError("q_sample: one step per row expected");
    auto a = schedule.sqrt_alpha_bar(k, z0.options()).unsqueeze(-1);
    auto b = schedule.sqrt_one_minus_alpha_bar(k, z0.options()).unsqueeze(-1);
    return a * z0 + b * eps;
}

torch::Tensor q_step(const torch::Tensor& z_prev, int k, const torch::Tensor& eps, const NoiseSchedule& schedule) {
    const double alpha = schedule.alpha(k);
    return std::sqrt(alpha) * z_prev + std::sqrt(1.0 - alpha) * eps;
}

torch::Tensor reverse_step(const torch::Tensor& z_k, const torch::Tensor& eps_hat, int k, const torch::Tensor& noise,
                           const NoiseSchedule& schedule) {
    const double alpha = schedule.alpha(k);
    const double abar = schedule.alpha_bar(k);
    auto mean = (z_k - (1.0 - alpha) / std::sqrt(1.0 - abar) * eps_hat) / std::sqrt(alpha);
    if (k == 1) return mean;
    return mean + std::sqrt(schedule.posterior_variance(k)) * noise;
}

}  // namespace cd3t::diffusion
