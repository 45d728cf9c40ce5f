#include "cd3t/analysis/pca.hpp"

#include <cmath>

#include "cd3t/errors.hpp"

namespace cd3t::analysis {

Projection pca_project(const Eigen::MatrixXd& points, int components) {
    if (points.rows() < 2) throw InputError("PCA needs at least two rows");
    if (components < 1 || components > points.cols()) throw InputError("PCA component count out of range");
    Projection out;
    out.mean = points.colwise().mean();
    const Eigen::MatrixXd centered = points.rowwise() - out.mean;
    const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(points.rows() - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success) throw InputError("PCA eigendecomposition failed");

    const auto d = points.cols();
    out.components.resize(d, components);
    out.variances.resize(components);
    for (int c = 0; c < components; ++c) {
        // Eigen orders eigenvalues ascending.
        const auto idx = d - 1 - c;
        Eigen::VectorXd axis = solver.eigenvectors().col(idx);
        Eigen::Index arg = 0;
        axis.cwiseAbs().maxCoeff(&arg);
        if (axis(arg) < 0) axis = -axis;
        out.components.col(c) = axis;
        out.variances(c) = std::max(solver.eigenvalues()(idx), 0.0);
    }
    if (centered.cwiseAbs().maxCoeff() == 0.0) {
        out.coordinates = Eigen::MatrixXd::Zero(points.rows(), components);
    } else {
        out.coordinates = centered * out.components;
    }
    return out;
}

}  // namespace cd3t::analysis
