#pragma once

#include <vector>

#include <torch/torch.h>

namespace cd3t::diffusion {

/// Linear variance schedule with precomputed alpha and cumulative alpha products.
/// Step indices are 1-based throughout, k in [1, steps()].
class NoiseSchedule {
public:
    /// beta_k = beta_start + (k-1)/(K-1) * (beta_end - beta_start). Throws ConfigError on bad bounds.
    static NoiseSchedule linear(int steps, double beta_start, double beta_end);

    int steps() const { return static_cast<int>(beta_.size()); }
    double beta(int k) const { return beta_.at(index(k)); }
    double alpha(int k) const { return alpha_.at(index(k)); }
    double alpha_bar(int k) const { return alpha_bar_.at(index(k)); }
    /// Posterior variance (1 - abar_{k-1}) / (1 - abar_k) * beta_k, with abar_0 = 1.
    double posterior_variance(int k) const;

    const std::vector<double>& betas() const { return beta_; }
    const std::vector<double>& alpha_bars() const { return alpha_bar_; }

    /// sqrt(abar_k) gathered for a batch of 1-based steps; shape of `k`, dtype of `options`.
    torch::Tensor sqrt_alpha_bar(const torch::Tensor& k, const torch::TensorOptions& options) const;
    torch::Tensor sqrt_one_minus_alpha_bar(const torch::Tensor& k, const torch::TensorOptions& options) const;

private:
    std::size_t index(int k) const;

    std::vector<double> beta_;
    std::vector<double> alpha_;
    std::vector<double> alpha_bar_;
};

/// Closed-form forward noising z_k = sqrt(abar_k) z0 + sqrt(1 - abar_k) eps.
torch::Tensor q_sample(const torch::Tensor& z0, int k, const torch::Tensor& eps, const NoiseSchedule& schedule);

/// Batched form: `k` holds one step per row of `z0`.
torch::Tensor q_sample(const torch::Tensor& z0, const torch::Tensor& k, const torch::Tensor& eps,
                       const NoiseSchedule& schedule);

/// Single forward transition z_k = sqrt(alpha_k) z_{k-1} + sqrt(1 - alpha_k) eps.
torch::Tensor q_step(const torch::Tensor& z_prev, int k, const torch::Tensor& eps, const NoiseSchedule& schedule);

/// One reverse transition from z_k given the predicted noise; `noise` is ignored when k == 1.
torch::Tensor reverse_step(const torch::Tensor& z_k, const torch::Tensor& eps_hat, int k, const torch::Tensor& noise,
                           const NoiseSchedule& schedule);

}  // namespace cd3t::diffusion
