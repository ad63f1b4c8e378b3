#pragma once
#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "mtfl/network.hpp"
#include "mtfl/rng.hpp"
#include "mtfl/tasks.hpp"

namespace mtfl::testing {

struct FdInstance {
    NetParams p;
    std::vector<TaskBatch> batches;
};

inline double global_loss(const NetParams& p, const std::vector<TaskBatch>& batches) {
    double total = 0.0;
    for (std::size_t i = 0; i < batches.size(); ++i)
        total += task_loss(p, static_cast<int>(i), batches[i].X, batches[i].y);
    return total / static_cast<double>(batches.size());
}

// Smallest distance of any preactivation from the ReLU kink and of any margin from the hinge kink.
inline double kink_distance(const NetParams& p, const std::vector<TaskBatch>& batches) {
    double closest = INFINITY;
    for (std::size_t i = 0; i < batches.size(); ++i) {
        Eigen::MatrixXd Z = batches[i].X * p.W.transpose();
        Z.rowwise() += p.b.transpose();
        closest = std::min(closest, Z.cwiseAbs().minCoeff());
        const Eigen::VectorXd f = Z.cwiseMax(0.0) * p.heads.row(static_cast<Eigen::Index>(i)).transpose();
        closest = std::min(closest, (1.0 - batches[i].y.cwiseProduct(f).array()).abs().minCoeff());
    }
    return closest;
}

// Random weights and heads away from every kink, with labels from random tables.
inline FdInstance random_instance(int d, int r, int m, int T, int n, Rng& rng, double min_gap = 1e-3) {
    for (;;) {
        FdInstance inst;
        inst.p.meta = {d, r, m, T, 1.0, 1.0};
        inst.p.W.resize(m, d);
        fill_normal(inst.p.W, rng, 1.0 / std::sqrt(static_cast<double>(d)));
        inst.p.b = Eigen::VectorXd::Zero(m);
        inst.p.heads.resize(T, m);
        fill_normal(inst.p.heads, rng, 1.0);
        const auto tasks = sample_tasks(r, T, rng);
        for (const auto& table : tasks.tables) {
            TaskBatch b;
            b.X = sample_gaussian_inputs(d, n, rng);
            b.y = labels(table, b.X);
            inst.batches.push_back(std::move(b));
        }
        if (kink_distance(inst.p, inst.batches) > min_gap) return inst;
    }
}

inline Eigen::MatrixXd fd_grad_weights(NetParams p, const std::vector<TaskBatch>& batches, double h = 1e-5) {
    Eigen::MatrixXd g(p.W.rows(), p.W.cols());
    for (Eigen::Index j = 0; j < p.W.rows(); ++j)
        for (Eigen::Index k = 0; k < p.W.cols(); ++k) {
            const double w = p.W(j, k);
            p.W(j, k) = w + h;
            const double up = global_loss(p, batches);
            p.W(j, k) = w - h;
            const double down = global_loss(p, batches);
            p.W(j, k) = w;
            g(j, k) = (up - down) / (2 * h);
        }
    return g;
}

inline Eigen::VectorXd fd_grad_head(NetParams p, int i, const TaskBatch& batch, double h = 1e-5) {
    Eigen::VectorXd g(p.heads.cols());
    for (Eigen::Index j = 0; j < p.heads.cols(); ++j) {
        const double a = p.heads(i, j);
        p.heads(i, j) = a + h;
        const double up = task_loss(p, i, batch.X, batch.y);
        p.heads(i, j) = a - h;
        const double down = task_loss(p, i, batch.X, batch.y);
        p.heads(i, j) = a;
        g(j) = (up - down) / (2 * h);
    }
    return g;
}

inline double relative_error(const Eigen::MatrixXd& got, const Eigen::MatrixXd& want) {
    const double scale = std::max(want.cwiseAbs().maxCoeff(), 1e-12);
    return (got - want).cwiseAbs().maxCoeff() / scale;
}

}  // namespace mtfl::testing
