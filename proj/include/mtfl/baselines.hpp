#pragma once
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mtfl/downstream.hpp"
#include "mtfl/pretrain.hpp"
#include "mtfl/rng.hpp"

namespace mtfl {

class ParityTask {
public:
    ParityTask(std::vector<int> support, int d);
    const std::vector<int>& support() const { return support_; }
    int d() const { return d_; }
    int r() const { return static_cast<int>(support_.size()); }

private:
    std::vector<int> support_;
    int d_;
};

int parity_label(const ParityTask& task, std::span<const double> v);
Eigen::VectorXd parity_labels(const ParityTask& task, const Eigen::MatrixXd& V);

// Psi(v) = relu(W v + b) / (|W|_2 sqrt(d) + |b|_2), so |Psi(v)| <= 1 on the hypercube.
struct RandomFeatures {
    Eigen::MatrixXd W;  // m_hat x d
    Eigen::VectorXd b;  // m_hat
    double norm_bound = 0.0;

    Eigen::MatrixXd embed_all(const Eigen::MatrixXd& V) const;
    Eigen::VectorXd embed(std::span<const double> v) const;
};

RandomFeatures random_feature_embedding(int d, int m_hat, Rng& rng);
// Normalises given weights by the same analytic bound (zero bound gives Psi = 0).
RandomFeatures random_feature_embedding(Eigen::MatrixXd W, Eigen::VectorXd b);

// The learned stack evaluated on inputs whose support coordinates are moved to
// the front, i.e. the stack a pretrain with label-relevant support u produces.
struct PermutedStack {
    const EmbeddingStack* stack = nullptr;
    std::vector<int> order;  // column order applied to inputs

    Eigen::MatrixXd embed_all(const Eigen::MatrixXd& V) const;
};

std::vector<int> support_first_order(const std::vector<int>& support, int d);

struct SeparationConfig {
    int d = 16;
    int r = 3;
    int m_hat = 64;
    int n_train = 256;
    int n_eval = 4096;
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
    PretrainConfig pretrain = PretrainConfig::with_defaults(16, 3, 64, 4096, 512, 0);
    int n_supports = 24;  // sampled besides the ground-truth support; all when C(d, r) is small
    double lambda_hat = default_lambda_hat;
    int n_iters = 50000;

    std::vector<std::string> violations() const;
};

struct SupportResult {
    std::uint64_t seed = 0;
    std::vector<int> support;
    std::string embedding;  // "learned" or "random"
    double eval_loss = 0.0;
    double eval_accuracy = 0.0;
    double train_objective = 0.0;
};

struct SeedSummary {
    std::uint64_t seed = 0;
    double learned_worst = 0.0, learned_mean = 0.0;
    double random_worst = 0.0, random_mean = 0.0;
};

struct ComparisonRecord {
    std::vector<SupportResult> rows;
    std::vector<SeedSummary> seeds;
    double median_learned_worst = 0.0;
    double median_random_worst = 0.0;
    double median_gap = 0.0;  // median over seeds of learned_worst - random_worst
};

std::vector<std::vector<int>> choose_supports(int d, int r, int n_supports, Rng& rng);

ComparisonRecord separation_experiment(const SeparationConfig& config);

}  // namespace mtfl
