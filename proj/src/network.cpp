#include "mtfl/network.hpp"

#include <vector>

#include "mtfl/errors.hpp"
#include "mtfl/parallel.hpp"

namespace mtfl {

namespace {

constexpr int tasks_per_chunk = 32;

void check_batch(const NetParams& p, const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    if (X.rows() == 0) throw invalid_argument("empty batch");
    if (X.cols() != p.W.cols()) throw invalid_argument("batch dimension does not match d");
    if (y.size() != X.rows()) throw invalid_argument("label count does not match batch size");
}

void check_head(const NetParams& p, int head_index) {
    if (head_index < 0 || head_index >= p.heads.rows()) throw std::out_of_range("head index out of range");
}

Eigen::MatrixXd preacts(const NetParams& p, const Eigen::MatrixXd& X) {
    Eigen::MatrixXd Z = X * p.W.transpose();
    Z.rowwise() += p.b.transpose();
    return Z;
}

// Contribution of one task's batch to grad_weights, before the 1/T factor.
Eigen::MatrixXd task_weight_grad(const NetParams& p, const Eigen::RowVectorXd& a, const TaskBatch& batch) {
    check_batch(p, batch.X, batch.y);
    const Eigen::MatrixXd Z = preacts(p, batch.X);
    const Eigen::VectorXd f = Z.cwiseMax(0.0) * a.transpose();
    const double inv_n = 1.0 / static_cast<double>(batch.X.rows());
    // S(l, j) = dLoss_l / dz_lj = -y_l [1 - y_l f_l > 0] a_j [z_lj > 0]
    Eigen::MatrixXd S(Z.rows(), Z.cols());
    for (Eigen::Index l = 0; l < Z.rows(); ++l) {
        const double yl = batch.y(l);
        const double coef = (1.0 - yl * f(l) > 0.0) ? -yl * inv_n : 0.0;
        for (Eigen::Index j = 0; j < Z.cols(); ++j) S(l, j) = (Z(l, j) > 0.0) ? coef * a(j) : 0.0;
    }
    return S.transpose() * batch.X;
}

}  // namespace

NetParams symmetric_init(int d, int r, int m, int T, double nu_w, double nu_a, Rng& rng) {
    if (m <= 0 || m % 2 != 0) throw invalid_argument("symmetric_init: m must be even and positive");
    if (d < 1 || T < 1) throw invalid_argument("symmetric_init: d and T must be >= 1");
    if (nu_w < 0.0 || nu_a < 0.0) throw invalid_argument("symmetric_init: scales must be nonnegative");
    const int half = m / 2;
    NetParams p;
    p.meta = {d, r, m, T, nu_w, nu_a};
    p.W.resize(m, d);
    fill_normal(p.W.topRows(half), rng, nu_w);
    p.W.bottomRows(half) = p.W.topRows(half);
    p.b = Eigen::VectorXd::Zero(m);
    p.heads.resize(T, m);
    fill_normal(p.heads.leftCols(half), rng, nu_a);
    p.heads.rightCols(half) = -p.heads.leftCols(half);
    return p;
}

bool is_symmetric(const NetParams& p) {
    const Eigen::Index m = p.W.rows();
    if (m % 2 != 0) return false;
    const Eigen::Index half = m / 2;
    return p.W.topRows(half) == p.W.bottomRows(half) && (p.b.array() == 0.0).all() &&
           p.heads.leftCols(half) == -p.heads.rightCols(half);
}

Prediction forward(const NetParams& p, int head_index, std::span<const double> x) {
    check_head(p, head_index);
    if (static_cast<Eigen::Index>(x.size()) != p.W.cols()) throw invalid_argument("forward: wrong input length");
    const Eigen::Map<const Eigen::VectorXd> xv(x.data(), static_cast<Eigen::Index>(x.size()));
    Prediction out;
    out.preacts = p.W * xv + p.b;
    out.value = p.heads.row(head_index).dot(out.preacts.cwiseMax(0.0));
    return out;
}

double hinge(double pred, int y) {
    if (y != 1 && y != -1) throw invalid_argument("hinge: label must be +1 or -1");
    return std::max(1.0 - y * pred, 0.0);
}

Eigen::MatrixXd hidden(const NetParams& p, const Eigen::MatrixXd& X) { return preacts(p, X).cwiseMax(0.0); }

double task_loss(const NetParams& p, int head_index, const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    check_head(p, head_index);
    check_batch(p, X, y);
    const Eigen::VectorXd f = hidden(p, X) * p.heads.row(head_index).transpose();
    double total = 0.0;
    for (Eigen::Index l = 0; l < X.rows(); ++l) total += hinge(f(l), static_cast<int>(y(l)));
    return total / static_cast<double>(X.rows());
}

Eigen::VectorXd grad_head(const NetParams& p, int head_index, const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    check_head(p, head_index);
    check_batch(p, X, y);
    const Eigen::MatrixXd H = hidden(p, X);
    const Eigen::VectorXd f = H * p.heads.row(head_index).transpose();
    Eigen::VectorXd coef(X.rows());
    for (Eigen::Index l = 0; l < X.rows(); ++l) coef(l) = (1.0 - y(l) * f(l) > 0.0) ? -y(l) : 0.0;
    return H.transpose() * coef / static_cast<double>(X.rows());
}

Eigen::MatrixXd grad_weights(const NetParams& p, const Eigen::MatrixXd& heads, int T, const BatchSource& source) {
    if (T < 1) throw invalid_argument("grad_weights: no tasks");
    if (heads.rows() != T || heads.cols() != p.W.rows())
        throw invalid_argument("grad_weights: heads must be T x m");
    const int chunks = (T + tasks_per_chunk - 1) / tasks_per_chunk;
    std::vector<Eigen::MatrixXd> parts(static_cast<std::size_t>(chunks));
    parallel_for(static_cast<std::size_t>(chunks), [&](std::size_t c) {
        const int begin = static_cast<int>(c) * tasks_per_chunk;
        const int end = std::min(T, begin + tasks_per_chunk);
        std::vector<Eigen::MatrixXd> local;
        local.reserve(static_cast<std::size_t>(end - begin));
        for (int i = begin; i < end; ++i) local.push_back(task_weight_grad(p, heads.row(i), source(i)));
        parts[c] = tree_reduce(std::move(local));
    });
    return tree_reduce(std::move(parts)) / static_cast<double>(T);
}

Eigen::MatrixXd grad_weights(const NetParams& p, const Eigen::MatrixXd& heads, std::span<const TaskBatch> batches) {
    if (batches.empty()) throw invalid_argument("grad_weights: no batches");
    if (static_cast<Eigen::Index>(batches.size()) != heads.rows())
        throw invalid_argument("grad_weights: batch count does not match task count");
    return grad_weights(p, heads, static_cast<int>(batches.size()),
                        [&](int i) { return batches[static_cast<std::size_t>(i)]; });
}

}  // namespace mtfl
