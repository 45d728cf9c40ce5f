#include "cd3t/subtask/kmeans.hpp"

#include <algorithm>
#include <limits>
#include <random>
#include <set>
#include <string>

#include "cd3t/errors.hpp"

namespace cd3t::subtask {

namespace {

std::vector<int> assign(const Eigen::MatrixXd& points, const Eigen::MatrixXd& centroids) {
    std::vector<int> out(static_cast<std::size_t>(points.rows()));
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        int best_j = 0;
        for (Eigen::Index j = 0; j < centroids.rows(); ++j) {
            const double d = (points.row(i) - centroids.row(j)).squaredNorm();
            if (d < best) {
                best = d;
                best_j = static_cast<int>(j);
            }
        }
        out[static_cast<std::size_t>(i)] = best_j;
    }
    return out;
}

Eigen::MatrixXd seed_plus_plus(const Eigen::MatrixXd& points, int clusters, std::mt19937_64& rng) {
    const Eigen::Index n = points.rows();
    Eigen::MatrixXd centroids(clusters, points.cols());
    std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
    centroids.row(0) = points.row(first(rng));
    std::vector<double> d2(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
    for (int c = 1; c < clusters; ++c) {
        for (Eigen::Index i = 0; i < n; ++i) {
            d2[static_cast<std::size_t>(i)] =
                std::min(d2[static_cast<std::size_t>(i)], (points.row(i) - centroids.row(c - 1)).squaredNorm());
        }
        std::discrete_distribution<Eigen::Index> pick(d2.begin(), d2.end());
        centroids.row(c) = points.row(pick(rng));
    }
    return centroids;
}

}  // namespace

int count_distinct_rows(const Eigen::MatrixXd& points) {
    std::set<std::vector<double>> rows;
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        std::vector<double> r(static_cast<std::size_t>(points.cols()));
        for (Eigen::Index c = 0; c < points.cols(); ++c) r[static_cast<std::size_t>(c)] = points(i, c);
        rows.insert(std::move(r));
    }
    return static_cast<int>(rows.size());
}

double clustering_objective(const Eigen::MatrixXd& points, const std::vector<int>& assignments,
                            const Eigen::MatrixXd& centroids) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        total += (points.row(i) - centroids.row(assignments[static_cast<std::size_t>(i)])).squaredNorm();
    }
    return total;
}

namespace {

KMeansResult lloyd(const Eigen::MatrixXd& points, int clusters, std::mt19937_64& rng, const KMeansOptions& options) {
    KMeansResult result;
    result.centroids = seed_plus_plus(points, clusters, rng);
    result.assignments = assign(points, result.centroids);
    result.objective_trace.push_back(clustering_objective(points, result.assignments, result.centroids));

    for (int iter = 0; iter < options.max_iterations; ++iter) {
        Eigen::MatrixXd next = Eigen::MatrixXd::Zero(clusters, points.cols());
        std::vector<int> counts(static_cast<std::size_t>(clusters), 0);
        for (Eigen::Index i = 0; i < points.rows(); ++i) {
            const int j = result.assignments[static_cast<std::size_t>(i)];
            next.row(j) += points.row(i);
            ++counts[static_cast<std::size_t>(j)];
        }
        for (int j = 0; j < clusters; ++j) {
            if (counts[static_cast<std::size_t>(j)] > 0) {
                next.row(j) /= static_cast<double>(counts[static_cast<std::size_t>(j)]);
                continue;
            }
            // Empty cluster: reseed at the point farthest from its current centroid.
            Eigen::Index far = 0;
            double far_d = -1.0;
            for (Eigen::Index i = 0; i < points.rows(); ++i) {
                const int owner = result.assignments[static_cast<std::size_t>(i)];
                if (counts[static_cast<std::size_t>(owner)] <= 1) continue;
                const double d = (points.row(i) - result.centroids.row(owner)).squaredNorm();
                if (d > far_d) {
                    far_d = d;
                    far = i;
                }
            }
            next.row(j) = points.row(far);
            --counts[static_cast<std::size_t>(result.assignments[static_cast<std::size_t>(far)])];
            result.assignments[static_cast<std::size_t>(far)] = j;
            counts[static_cast<std::size_t>(j)] = 1;
        }

        const double movement = (next - result.centroids).rowwise().norm().maxCoeff();
        result.centroids = next;
        result.assignments = assign(points, result.centroids);
        result.objective_trace.push_back(clustering_objective(points, result.assignments, result.centroids));
        result.iterations = iter + 1;
        if (movement < options.tolerance) break;
    }

    // Final guard: the last assignment step can still leave a cluster empty in degenerate layouts.
    std::vector<int> counts(static_cast<std::size_t>(clusters), 0);
    for (int a : result.assignments) ++counts[static_cast<std::size_t>(a)];
    for (int j = 0; j < clusters; ++j) {
        if (counts[static_cast<std::size_t>(j)] > 0) continue;
        Eigen::Index far = 0;
        double far_d = -1.0;
        for (Eigen::Index i = 0; i < points.rows(); ++i) {
            const int owner = result.assignments[static_cast<std::size_t>(i)];
            if (counts[static_cast<std::size_t>(owner)] <= 1) continue;
            const double d = (points.row(i) - result.centroids.row(owner)).squaredNorm();
            if (d > far_d) {
                far_d = d;
                far = i;
            }
        }
        --counts[static_cast<std::size_t>(result.assignments[static_cast<std::size_t>(far)])];
        result.assignments[static_cast<std::size_t>(far)] = j;
        counts[static_cast<std::size_t>(j)] = 1;
        result.centroids.row(j) = points.row(far);
    }
    return result;
}

}  // namespace

KMeansResult kmeans_partition(const Eigen::MatrixXd& points, int clusters, std::uint64_t seed,
                              const KMeansOptions& options) {
    if (clusters < 1) throw ConfigError("cluster count must be >= 1");
    if (options.restarts < 1) throw ConfigError("k-means needs at least one restart");
    const int distinct = count_distinct_rows(points);
    if (clusters > distinct) {
        throw ConfigError("cannot form " + std::to_string(clusters) + " clusters from " + std::to_string(distinct) +
                          " distinct points");
    }
    std::mt19937_64 rng(seed);
    KMeansResult best = lloyd(points, clusters, rng, options);
    for (int r = 1; r < options.restarts; ++r) {
        auto candidate = lloyd(points, clusters, rng, options);
        if (candidate.objective() < best.objective()) best = std::move(candidate);
    }
    return best;
}

}  // namespace cd3t::subtask
