#pragma once
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mtfl/network.hpp"
#include "mtfl/tasks.hpp"

namespace mtfl {

struct Hyperparams {
    double eta = 1.0;
    double lambda_a = 1.0;
    double lambda_w = 1.0;
    double nu_w = 1.0;
};

Hyperparams default_hyperparams(int r, int d);
// (1 + eta^2 2^(-r-1) / pi) / eta
double default_lambda_w(int r, double eta);

struct PretrainConfig {
    int d = 32;
    int r = 2;
    int m = 64;
    int T = 4096;
    double eta = 1.0;
    double lambda_a = 1.0;
    double lambda_w = 1.0;
    double nu_w = 1.0;
    double nu_a = 0.125;
    int n_per_task = 512;
    std::uint64_t seed = 0;
    TaskSource tasks = TaskSource::iid_uniform;

    // Dimensions as given, hyperparameters from default_hyperparams, nu_a = 1/sqrt(m).
    static PretrainConfig with_defaults(int d, int r, int m, int T, int n_per_task, std::uint64_t seed);
    std::vector<std::string> violations() const;
};

struct PretrainResult {
    PretrainConfig config;
    TaskSet tasks;
    NetParams init;              // W0, zero biases, mirrored heads a0
    Eigen::MatrixXd Wplus;       // m x d
    Eigen::MatrixXd heads_plus;  // T x m
    double wall_seconds = 0.0;
    std::uint64_t seed = 0;

    const Eigen::MatrixXd& W0() const { return init.W; }
    NetParams trained() const;
};

// (1 - eta lambda_a) a0 - eta grad_head. With lambda_a = 1/eta the result is
// cross-checked against the closed form and a mismatch raises contract_violation.
Eigen::VectorXd head_step(const NetParams& p, int task_index, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                          double eta, double lambda_a);
// eta * mean_l y_l relu(W0 x_l); requires symmetric parameters.
Eigen::VectorXd head_step_closed_form(const NetParams& p, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                      double eta);

Eigen::MatrixXd representation_step(const NetParams& p, const Eigen::MatrixXd& heads_plus,
                                    std::span<const TaskBatch> batches, double eta, double lambda_w);
Eigen::MatrixXd representation_step(const NetParams& p, const Eigen::MatrixXd& heads_plus, int T,
                                    const BatchSource& source, double eta, double lambda_w);

PretrainResult pretrain(const PretrainConfig& config);

// Fresh Gaussian batch for a task, reproducible from (seed, stream, task).
TaskBatch task_batch(const PretrainConfig& config, const LabelTable& table, Stream stream, int task);

}  // namespace mtfl
