// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>

// Gaussian fits to feature sets and the Frechet (Wasserstein-2) distance
// between them.
namespace flowtok::metrics {

struct GaussianStats {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;  // (n - 1)-normalised
    std::size_t n = 0;
};

// Rows are samples. Two-pass mean then covariance. Throws UserError for n < 2.
GaussianStats fit_gaussian(const Eigen::MatrixXd& features);

// ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2}), with the trace of the
// square root taken from the eigenvalues of S_b^{1/2} S_a S_b^{1/2}.
// Eigenvalues in (-1e-6, 0) are clipped to 0; anything below throws
// NumericError. Mismatched dimensions throw UserError. Result >= 0.
double frechet_distance(const GaussianStats& a, const GaussianStats& b);

// Symmetric PSD square root with the same clipping rules.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m);

}  // namespace flowtok::metrics
