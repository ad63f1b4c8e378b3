#pragma once
#include <functional>
#include <span>

#include <Eigen/Dense>

#include "mtfl/rng.hpp"

namespace mtfl {

struct NetMeta {
    int d = 0;
    int r = 0;
    int m = 0;
    int T = 0;
    double nu_w = 0.0;
    double nu_a = 0.0;
};

// f_i(x) = sum_j heads(i, j) * relu(W.row(j) x + b(j))
struct NetParams {
    Eigen::MatrixXd W;      // m x d
    Eigen::VectorXd b;      // m
    Eigen::MatrixXd heads;  // T x m
    NetMeta meta;
};

struct Prediction {
    double value = 0.0;
    Eigen::VectorXd preacts;
};

// One task's samples (rows of X) and their ±1 labels.
struct TaskBatch {
    Eigen::MatrixXd X;
    Eigen::VectorXd y;
};

NetParams symmetric_init(int d, int r, int m, int T, double nu_w, double nu_a, Rng& rng);
// True when the mirrored-row, negated-head, zero-bias structure holds exactly.
bool is_symmetric(const NetParams& p);

Prediction forward(const NetParams& p, int head_index, std::span<const double> x);
double hinge(double pred, int y);

double task_loss(const NetParams& p, int head_index, const Eigen::MatrixXd& X, const Eigen::VectorXd& y);
Eigen::VectorXd grad_head(const NetParams& p, int head_index, const Eigen::MatrixXd& X, const Eigen::VectorXd& y);

// Gradient of (1/T) sum_i mean_l hinge(heads.row(i) relu(W x_l + b), y_l) in W.
Eigen::MatrixXd grad_weights(const NetParams& p, const Eigen::MatrixXd& heads, std::span<const TaskBatch> batches);
// Same, with batch i produced on demand so large T never materialises all data.
using BatchSource = std::function<TaskBatch(int task)>;
Eigen::MatrixXd grad_weights(const NetParams& p, const Eigen::MatrixXd& heads, int T, const BatchSource& source);

// relu(X W^T + 1 b^T)
Eigen::MatrixXd hidden(const NetParams& p, const Eigen::MatrixXd& X);

}  // namespace mtfl
