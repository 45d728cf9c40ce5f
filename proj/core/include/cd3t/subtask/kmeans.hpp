#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace cd3t::subtask {

struct KMeansOptions {
    int max_iterations = 300;
    /// Stop once no centroid moves farther than this.
    double tolerance = 1e-6;
    /// Independent seedings; the lowest final objective wins.
    int restarts = 10;
};

struct KMeansResult {
    std::vector<int> assignments;
    Eigen::MatrixXd centroids;
    /// Sum of squared distances after each assignment step; first entry is the seeded assignment.
    std::vector<double> objective_trace;
    int iterations = 0;

    double objective() const { return objective_trace.empty() ? 0.0 : objective_trace.back(); }
};

/// Lloyd's algorithm with k-means++ seeding, best of `restarts` runs. Throws ConfigError if J < 1 or J exceeds the distinct rows of `points`.
KMeansResult kmeans_partition(const Eigen::MatrixXd& points, int clusters, std::uint64_t seed,
                              const KMeansOptions& options = {});

int count_distinct_rows(const Eigen::MatrixXd& points);

double clustering_objective(const Eigen::MatrixXd& points, const std::vector<int>& assignments,
                            const Eigen::MatrixXd& centroids);

}  // namespace cd3t::subtask
