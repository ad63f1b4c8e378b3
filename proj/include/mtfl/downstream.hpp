#pragma once
#include <concepts>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mtfl/rng.hpp"
#include "mtfl/tasks.hpp"

namespace mtfl {

enum class StackVariant { learned, purified };

// How the learned stack's first layer is rescaled.
enum class RescaleRule {
    coupled,  // alpha = alpha_hat 2^(r+2) / eta^2, so c [W0_{:r} | 0] maps onto the purified layer
    stated,   // alpha = 2^(r+2.5) / (sqrt(m_bar) eta^2)
};

// v -> relu(layer2_W relu(layer1_W v + layer1_b) + layer2_b)
struct EmbeddingStack {
    Eigen::MatrixXd layer1_W;  // m_bar x d
    Eigen::VectorXd layer1_b;  // m_bar
    Eigen::MatrixXd layer2_W;  // m_hat x m_bar
    Eigen::VectorXd layer2_b;  // m_hat
    double scale = 1.0;        // alpha or alpha_hat
    double gamma = 1.0;
    double gamma_hat = 1.0;
    StackVariant variant = StackVariant::learned;
    std::uint64_t shared_id = 0;

    int input_dim() const { return static_cast<int>(layer1_W.cols()); }
    int output_dim() const { return static_cast<int>(layer2_W.rows()); }
    // Rows of V are hypercube points; returns one embedding per row.
    Eigen::MatrixXd embed_all(const Eigen::MatrixXd& V) const;
};

struct EmbeddingPair {
    EmbeddingStack learned;
    EmbeddingStack purified;
};

double learned_rescale(int r, double eta, double nu_w, int m_bar);
double stated_learned_rescale(int r, double eta, int m_bar);
double purified_rescale(double nu_w, int m_bar);

std::pair<double, double> default_downstream_scales(int r);

EmbeddingPair build_embedding_pair(const Eigen::MatrixXd& W0, const Eigen::MatrixXd& Wplus, int r, double eta,
                                   double nu_w, int m_hat, double gamma, double gamma_hat, Rng& rng,
                                   RescaleRule rule = RescaleRule::coupled);

Eigen::VectorXd embed(const EmbeddingStack& stack, std::span<const double> v);

template <class E>
concept Embedder = requires(const E& e, const Eigen::MatrixXd& V) {
    { e.embed_all(V) } -> std::convertible_to<Eigen::MatrixXd>;
};

struct DownstreamHead {
    Eigen::VectorXd a;
    double tau = 0.0;
};

struct HeadConvergence {
    std::vector<double> checkpoints;  // objective of the averaged iterate every 100 iterations
    double final_objective = 0.0;
    double running_min = 0.0;
    double tail_decrease = 0.0;  // objective decrease over the last 10% of iterations
    bool converged = false;
};

struct TrainedHead {
    DownstreamHead head;
    HeadConvergence report;
};

inline constexpr double default_lambda_hat = 1e-3;
inline constexpr int head_checkpoint_every = 100;

// (1/n) sum hinge(a.g_l + tau, y_l) + (lambda/2)(|a|^2 + tau^2)
double head_objective(const Eigen::MatrixXd& G, const Eigen::VectorXd& y, const DownstreamHead& h, double lambda);

// Averaged projected subgradient descent on head_objective over the rows of G.
// A warm start continues the step schedule after `warm_iters` earlier iterations.
TrainedHead train_head(const Eigen::MatrixXd& G, const Eigen::VectorXd& y, double lambda, int n_iters,
                       const DownstreamHead* warm = nullptr, int warm_iters = 0);

template <Embedder E>
TrainedHead train_head(const E& stack, const Eigen::MatrixXd& V, const Eigen::VectorXd& y, double lambda,
                       int n_iters) {
    return train_head(stack.embed_all(V), y, lambda, n_iters);
}

Eigen::VectorXd head_predictions(const Eigen::MatrixXd& G, const DownstreamHead& h);
double eval_loss(const Eigen::MatrixXd& G, const DownstreamHead& h, const Eigen::VectorXd& y);
double eval_accuracy(const Eigen::MatrixXd& G, const DownstreamHead& h, const Eigen::VectorXd& y);

double eval_loss(const EmbeddingStack& stack, const DownstreamHead& h, const LabelTable& table,
                 const Eigen::MatrixXd& V);
double eval_accuracy(const EmbeddingStack& stack, const DownstreamHead& h, const LabelTable& table,
                     const Eigen::MatrixXd& V);

inline constexpr int exhaustive_max_d = 16;
inline constexpr int sampled_eval_points = 1 << 14;

// All 2^d points of {-1, +1}^d; point k has v_j = +1 iff bit j of k is set.
Eigen::MatrixXd hypercube_points(int d);
// Exhaustive for d <= 16, else 2^14 i.i.d. points from rng.
Eigen::MatrixXd evaluation_points(int d, Rng& rng);

struct MarginReport {
    double margin = 0.0;
    bool separable = false;
    DownstreamHead head;
};

inline constexpr double margin_lambdas[] = {1e-2, 1e-3, 1e-4};

MarginReport margin_of(const Eigen::MatrixXd& G, const Eigen::VectorXd& y, const DownstreamHead& h);
MarginReport margin_check(const Eigen::MatrixXd& G, const Eigen::VectorXd& y, int iters_per_stage = 2000);
MarginReport margin_check(const EmbeddingStack& stack, const LabelTable& table, int r, int d, Rng& rng,
                          int iters_per_stage = 2000);

struct GapStats {
    std::vector<double> gaps;
    double median = 0.0;
    double max = 0.0;
};

GapStats embedding_gap(const EmbeddingStack& learned, const EmbeddingStack& purified, const Eigen::MatrixXd& V);

}  // namespace mtfl
