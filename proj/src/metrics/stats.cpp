// SPDX-License-Identifier: Apache-2.0
#include "flowtok/metrics/stats.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <string>

#include "flowtok/error.hpp"

namespace flowtok::metrics {
namespace {

constexpr double kClip = -1e-6;

Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig_checked(const Eigen::MatrixXd& m, const char* what) {
    const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
    if (es.info() != Eigen::Success) throw NumericError(std::string(what) + ": eigendecomposition failed");
    if (es.eigenvalues().size() > 0 && es.eigenvalues().minCoeff() < kClip) {
        throw NumericError(std::string(what) + ": matrix is not positive semidefinite (eigenvalue " +
                           std::to_string(es.eigenvalues().minCoeff()) + ")");
    }
    return es;
}

}  // namespace

GaussianStats fit_gaussian(const Eigen::MatrixXd& features) {
    const auto n = static_cast<std::size_t>(features.rows());
    if (n < 2) throw UserError("fit_gaussian: need at least 2 samples, got " + std::to_string(n));
    if (!features.allFinite()) throw NumericError("fit_gaussian: non-finite feature");
    GaussianStats s;
    s.n = n;
    s.mean = features.colwise().mean().transpose();
    const Eigen::MatrixXd c = features.rowwise() - s.mean.transpose();
    s.cov = (c.transpose() * c) / static_cast<double>(n - 1);
    return s;
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
    const auto es = eig_checked(m, "psd_sqrt");
    const Eigen::VectorXd r = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * r.asDiagonal() * es.eigenvectors().transpose();
}

double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
    if (a.mean.size() != b.mean.size() || a.cov.rows() != a.mean.size() || b.cov.rows() != b.mean.size()) {
        throw UserError("frechet_distance: dimension mismatch (" + std::to_string(a.mean.size()) + " vs " +
                        std::to_string(b.mean.size()) + ")");
    }
    const Eigen::MatrixXd sb = psd_sqrt(b.cov);
    const auto es = eig_checked(sb * a.cov * sb, "frechet_distance");
    const double cross = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
    const double d = (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() - 2.0 * cross;
    if (!std::isfinite(d)) throw NumericError("frechet_distance: non-finite result");
    return std::max(0.0, d);
}

}  // namespace flowtok::metrics
