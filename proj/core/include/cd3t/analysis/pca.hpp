#pragma once

#include <Eigen/Dense>

namespace cd3t::analysis {

struct Projection {
    Eigen::MatrixXd coordinates;  ///< rows x components
    Eigen::MatrixXd components;   ///< d x components, unit columns
    Eigen::VectorXd variances;    ///< eigenvalues of the sample covariance, descending
    Eigen::RowVectorXd mean;
};

/// Projects the row-centered matrix onto its leading principal axes. Each axis is oriented so that its
/// largest-magnitude loading is positive. A rank-0 input projects to zeros. Throws InputError for fewer than 2 rows.
Projection pca_project(const Eigen::MatrixXd& points, int components = 2);

}  // namespace cd3t::analysis
