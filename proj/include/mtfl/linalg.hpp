#pragma once
#include <vector>

#include <Eigen/Dense>

namespace mtfl {

// Largest singular value by power iteration on A^T A (100 iterations, relative
// residual tolerance 1e-10). Matrices with min(rows, cols) <= 8, and iterations
// that fail to converge, go through the eigen-decomposition of the Gram matrix.
double spectral_norm(const Eigen::MatrixXd& A, int max_iters = 100, double tol = 1e-10);

// Singular values in descending order, from the eigenvalues of the smaller Gram matrix.
Eigen::VectorXd singular_values(const Eigen::MatrixXd& A);

// k-th largest singular value, 1-based; 0 when k exceeds the rank dimension.
double kth_singular_value(const Eigen::MatrixXd& A, int k);

double median(std::vector<double> values);

}  // namespace mtfl
