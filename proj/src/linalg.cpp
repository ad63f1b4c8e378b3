#include "mtfl/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "mtfl/errors.hpp"

namespace mtfl {

Eigen::VectorXd singular_values(const Eigen::MatrixXd& A) {
    if (A.size() == 0) return Eigen::VectorXd();
    const Eigen::MatrixXd G = A.rows() >= A.cols() ? Eigen::MatrixXd(A.transpose() * A)
                                                   : Eigen::MatrixXd(A * A.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G, Eigen::EigenvaluesOnly);
    Eigen::VectorXd ev = es.eigenvalues().reverse();
    return ev.cwiseMax(0.0).cwiseSqrt();
}

double kth_singular_value(const Eigen::MatrixXd& A, int k) {
    if (k < 1) throw invalid_argument("kth_singular_value: k must be >= 1");
    const Eigen::VectorXd s = singular_values(A);
    return k <= s.size() ? s(k - 1) : 0.0;
}

double spectral_norm(const Eigen::MatrixXd& A, int max_iters, double tol) {
    if (A.size() == 0) return 0.0;
    if (std::min(A.rows(), A.cols()) <= 8) return singular_values(A)(0);

    // Fixed start vector keeps the result deterministic.
    Eigen::VectorXd v = Eigen::VectorXd::LinSpaced(A.cols(), 1.0, 2.0).normalized();
    for (int it = 0; it < max_iters; ++it) {
        const Eigen::VectorXd w = A.transpose() * (A * v);
        const double lambda = v.dot(w);
        if (lambda <= 0.0) return 0.0;
        // |lambda - sigma_1^2| <= residual once the iterate has locked onto the top direction
        if ((w - lambda * v).norm() <= tol * lambda) return std::sqrt(lambda);
        v = w.normalized();
    }
    return singular_values(A)(0);
}

double median(std::vector<double> values) {
    if (values.empty()) throw invalid_argument("median of empty set");
    const std::size_t n = values.size();
    std::sort(values.begin(), values.end());
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace mtfl
