#include <benchmark/benchmark.h>

#include <random>

#include "cd3t/subtask/kmeans.hpp"

static void BM_KMeans(benchmark::State& state) {
    std::mt19937_64 rng(0);
    std::normal_distribution<double> n;
    Eigen::MatrixXd points(state.range(0), 20);
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        for (Eigen::Index k = 0; k < points.cols(); ++k) points(i, k) = n(rng) + static_cast<double>(i % 3) * 5.0;
    }
    std::uint64_t seed = 0;
    for (auto _ : state) {
        auto r = cd3t::subtask::kmeans_partition(points, 3, seed++);
        benchmark::DoNotOptimize(r.assignments.data());
    }
}
BENCHMARK(BM_KMeans)->Arg(6)->Arg(150)->Arg(1000);
