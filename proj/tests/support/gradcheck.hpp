#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include <torch/torch.h>

namespace cd3t::test_support {

struct GradcheckReport {
    double max_relative_error = 0.0;
    int coordinates = 0;
    /// Analytic and numeric values at the worst coordinate.
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

/// Fourth-order central finite differences against autograd on a random subset of coordinates per tensor.
/// Smooth losses tolerate a larger `step`, which lowers roundoff noise on large loss values.
/// Tensors must be float64 leaves with requires_grad set; `loss` must be a pure function of them.
inline GradcheckReport gradcheck(const std::function<torch::Tensor()>& loss, const std::vector<torch::Tensor>& tensors,
                                 int per_tensor = 8, std::uint64_t seed = 0, double step = 1e-5,
                                 double floor = 1e-6) {
    auto value = loss();
    auto analytic = torch::autograd::grad({value}, tensors, {}, false, false, true);
    std::mt19937_64 rng(seed);
    GradcheckReport report;
    torch::NoGradGuard guard;
    for (std::size_t p = 0; p < tensors.size(); ++p) {
        auto flat = tensors[p].view({-1});
        auto grad = analytic[p].defined() ? analytic[p].reshape({-1}) : torch::zeros_like(flat);
        const auto n = flat.numel();
        std::vector<int64_t> idx(static_cast<std::size_t>(n));
        for (int64_t i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(static_cast<std::size_t>(std::min<int64_t>(n, per_tensor)));
        auto* data = flat.data_ptr<double>();
        for (auto i : idx) {
            const double original = data[i];
            auto at = [&](double offset) {
                data[i] = original + offset;
                return loss().item<double>();
            };
            const double numeric =
                (-at(2.0 * step) + 8.0 * at(step) - 8.0 * at(-step) + at(-2.0 * step)) / (12.0 * step);
            data[i] = original;
            const double a = grad[i].item<double>();
            const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
            if (rel > report.max_relative_error) {
                report.max_relative_error = rel;
                report.worst_analytic = a;
                report.worst_numeric = numeric;
            }
            ++report.coordinates;
        }
    }
    return report;
}

}  // namespace cd3t::test_support
