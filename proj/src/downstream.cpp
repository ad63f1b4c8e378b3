#include "mtfl/downstream.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mtfl/errors.hpp"
#include "mtfl/linalg.hpp"
#include "mtfl/parallel.hpp"

namespace mtfl {

namespace {

constexpr Eigen::Index embed_chunk = 4096;

Eigen::MatrixXd augment(const Eigen::MatrixXd& G) {
    Eigen::MatrixXd A(G.rows(), G.cols() + 1);
    A.leftCols(G.cols()) = G;
    A.col(G.cols()).setOnes();
    return A;
}

DownstreamHead unpack(const Eigen::VectorXd& theta) {
    return {theta.head(theta.size() - 1), theta(theta.size() - 1)};
}

Eigen::VectorXd pack(const DownstreamHead& h) {
    Eigen::VectorXd theta(h.a.size() + 1);
    theta << h.a, h.tau;
    return theta;
}

double objective_aug(const Eigen::MatrixXd& Ga, const Eigen::VectorXd& y, const Eigen::VectorXd& theta,
                     double lambda) {
    const Eigen::VectorXd pred = Ga * theta;
    double loss = 0.0;
    for (Eigen::Index l = 0; l < pred.size(); ++l) loss += std::max(1.0 - y(l) * pred(l), 0.0);
    return loss / static_cast<double>(pred.size()) + 0.5 * lambda * theta.squaredNorm();
}

// Applies f to consecutive row blocks of V and stacks the results.
template <class F>
Eigen::MatrixXd by_chunks(const Eigen::MatrixXd& V, Eigen::Index out_cols, F f) {
    Eigen::MatrixXd out(V.rows(), out_cols);
    const auto chunks = static_cast<std::size_t>((V.rows() + embed_chunk - 1) / embed_chunk);
    parallel_for(chunks, [&](std::size_t c) {
        const Eigen::Index begin = static_cast<Eigen::Index>(c) * embed_chunk;
        const Eigen::Index rows = std::min(embed_chunk, V.rows() - begin);
        out.middleRows(begin, rows) = f(V.middleRows(begin, rows));
    });
    return out;
}

}  // namespace

Eigen::MatrixXd EmbeddingStack::embed_all(const Eigen::MatrixXd& V) const {
    if (V.cols() != layer1_W.cols()) throw invalid_argument("embed: wrong input length");
    return by_chunks(V, layer2_W.rows(), [&](const Eigen::MatrixXd& block) {
        Eigen::MatrixXd H = block * layer1_W.transpose();
        H.rowwise() += layer1_b.transpose();
        Eigen::MatrixXd Z = H.cwiseMax(0.0) * layer2_W.transpose();
        Z.rowwise() += layer2_b.transpose();
        return Eigen::MatrixXd(Z.cwiseMax(0.0));
    });
}

Eigen::VectorXd embed(const EmbeddingStack& stack, std::span<const double> v) {
    if (static_cast<Eigen::Index>(v.size()) != stack.layer1_W.cols()) throw invalid_argument("embed: wrong input length");
    const Eigen::Map<const Eigen::VectorXd> x(v.data(), static_cast<Eigen::Index>(v.size()));
    const Eigen::VectorXd h = (stack.layer1_W * x + stack.layer1_b).cwiseMax(0.0);
    return (stack.layer2_W * h + stack.layer2_b).cwiseMax(0.0);
}

double learned_rescale(int r, double eta, double nu_w, int m_bar) {
    return std::ldexp(1.0, r + 2) / (eta * eta) * purified_rescale(nu_w, m_bar);
}

double stated_learned_rescale(int r, double eta, int m_bar) {
    return std::pow(2.0, r + 2.5) / (std::sqrt(static_cast<double>(m_bar)) * eta * eta);
}

double purified_rescale(double nu_w, int m_bar) { return 2.0 / (nu_w * std::sqrt(static_cast<double>(m_bar))); }

std::pair<double, double> default_downstream_scales(int r) {
    if (r < 1) throw invalid_argument("default_downstream_scales: r must be >= 1");
    const double lg = std::max(1.0, std::log(static_cast<double>(r)));
    return {std::sqrt(static_cast<double>(r)) * lg, std::pow(static_cast<double>(r), 3) * std::pow(lg, 4)};
}

EmbeddingPair build_embedding_pair(const Eigen::MatrixXd& W0, const Eigen::MatrixXd& Wplus, int r, double eta,
                                   double nu_w, int m_hat, double gamma, double gamma_hat, Rng& rng,
                                   RescaleRule rule) {
    if (W0.rows() % 2 != 0 || W0.rows() == 0) throw invalid_argument("build_embedding_pair: m must be even");
    if (W0.rows() != Wplus.rows() || W0.cols() != Wplus.cols())
        throw invalid_argument("build_embedding_pair: shape mismatch");
    if (m_hat < 1) throw invalid_argument("build_embedding_pair: m_hat must be >= 1");
    if (r < 1 || r > W0.cols()) throw invalid_argument("build_embedding_pair: need 1 <= r <= d");
    const int m_bar = static_cast<int>(W0.rows() / 2);
    const Eigen::Index d = W0.cols();

    EmbeddingStack shared;
    shared.shared_id = rng();
    shared.gamma = gamma;
    shared.gamma_hat = gamma_hat;
    const double b1 = std::sqrt(2.0) * gamma / std::sqrt(static_cast<double>(m_bar));
    const double b2 = std::sqrt(2.0) * gamma_hat / std::sqrt(static_cast<double>(m_hat));
    shared.layer1_b.resize(m_bar);
    for (auto& v : shared.layer1_b) v = uniform(rng, -b1, b1);
    shared.layer2_W.resize(m_hat, m_bar);
    fill_normal(shared.layer2_W, rng, std::sqrt(2.0 / m_hat));
    shared.layer2_b.resize(m_hat);
    for (auto& v : shared.layer2_b) v = uniform(rng, -b2, b2);

    EmbeddingPair pair{shared, shared};
    pair.learned.variant = StackVariant::learned;
    pair.learned.scale = rule == RescaleRule::coupled ? learned_rescale(r, eta, nu_w, m_bar)
                                                      : stated_learned_rescale(r, eta, m_bar);
    pair.learned.layer1_W = pair.learned.scale * Wplus.topRows(m_bar);

    pair.purified.variant = StackVariant::purified;
    pair.purified.scale = purified_rescale(nu_w, m_bar);
    pair.purified.layer1_W = Eigen::MatrixXd::Zero(m_bar, d);
    pair.purified.layer1_W.leftCols(r) = pair.purified.scale * W0.topRows(m_bar).leftCols(r);
    return pair;
}

double head_objective(const Eigen::MatrixXd& G, const Eigen::VectorXd& y, const DownstreamHead& h, double lambda) {
    return objective_aug(augment(G), y, pack(h), lambda);
}

TrainedHead train_head(const Eigen::MatrixXd& G, const Eigen::VectorXd& y, double lambda, int n_iters,
                       const DownstreamHead* warm, int warm_iters) {
    if (!(lambda > 0.0)) throw invalid_argument("train_head: lambda must be > 0");
    if (G.rows() == 0) throw invalid_argument("train_head: no samples");
    if (y.size() != G.rows()) throw invalid_argument("train_head: label count mismatch");
    if (n_iters < 1) throw invalid_argument("train_head: n_iters must be >= 1");

    const Eigen::MatrixXd Ga = augment(G);
    const double inv_n = 1.0 / static_cast<double>(G.rows());
    const double radius = std::sqrt(2.0 / lambda);
    Eigen::VectorXd theta = warm ? pack(*warm) : Eigen::VectorXd::Zero(Ga.cols());
    Eigen::VectorXd avg = theta;
    Eigen::VectorXd coef(G.rows());

    HeadConvergence rep;
    const int tail_start = n_iters - std::max(1, n_iters / 10);
    double tail_ref = 0.0;
    for (int t = 1; t <= n_iters; ++t) {
        const double s = static_cast<double>(t + warm_iters);
        const Eigen::VectorXd pred = Ga * theta;
        for (Eigen::Index l = 0; l < pred.size(); ++l) coef(l) = y(l) * pred(l) < 1.0 ? y(l) : 0.0;
        const Eigen::VectorXd grad = lambda * theta - inv_n * (Ga.transpose() * coef);
        theta -= grad / (lambda * s);
        if (const double nrm = theta.norm(); nrm > radius) theta *= radius / nrm;
        avg += (2.0 / (s + 1.0)) * (theta - avg);

        if (t == tail_start) tail_ref = objective_aug(Ga, y, avg, lambda);
        if (t % head_checkpoint_every == 0) rep.checkpoints.push_back(objective_aug(Ga, y, avg, lambda));
    }
    rep.final_objective = objective_aug(Ga, y, avg, lambda);
    if (tail_start < 1) tail_ref = rep.final_objective;
    rep.running_min = rep.final_objective;
    for (double c : rep.checkpoints) rep.running_min = std::min(rep.running_min, c);
    rep.tail_decrease = tail_ref - rep.final_objective;
    rep.converged = rep.final_objective - rep.running_min <= 2.0 * std::max(rep.tail_decrease, 0.0);
    return {unpack(avg), rep};
}

Eigen::VectorXd head_predictions(const Eigen::MatrixXd& G, const DownstreamHead& h) {
    if (G.cols() != h.a.size()) throw invalid_argument("head dimension does not match embedding");
    return (G * h.a).array() + h.tau;
}

double eval_loss(const Eigen::MatrixXd& G, const DownstreamHead& h, const Eigen::VectorXd& y) {
    const Eigen::VectorXd pred = head_predictions(G, h);
    double loss = 0.0;
    for (Eigen::Index l = 0; l < pred.size(); ++l) loss += std::max(1.0 - y(l) * pred(l), 0.0);
    return loss / static_cast<double>(pred.size());
}

double eval_accuracy(const Eigen::MatrixXd& G, const DownstreamHead& h, const Eigen::VectorXd& y) {
    const Eigen::VectorXd pred = head_predictions(G, h);
    Eigen::Index hits = 0;
    for (Eigen::Index l = 0; l < pred.size(); ++l) hits += (pred(l) > 0.0 ? 1.0 : -1.0) == y(l);
    return static_cast<double>(hits) / static_cast<double>(pred.size());
}

double eval_loss(const EmbeddingStack& stack, const DownstreamHead& h, const LabelTable& table,
                 const Eigen::MatrixXd& V) {
    return eval_loss(stack.embed_all(V), h, labels(table, V));
}

double eval_accuracy(const EmbeddingStack& stack, const DownstreamHead& h, const LabelTable& table,
                     const Eigen::MatrixXd& V) {
    return eval_accuracy(stack.embed_all(V), h, labels(table, V));
}

Eigen::MatrixXd hypercube_points(int d) {
    if (d < 1 || d > exhaustive_max_d) throw invalid_argument("hypercube_points: need 1 <= d <= 16");
    const Eigen::Index n = Eigen::Index{1} << d;
    Eigen::MatrixXd V(n, d);
    for (Eigen::Index k = 0; k < n; ++k)
        for (int j = 0; j < d; ++j) V(k, j) = ((k >> j) & 1) ? 1.0 : -1.0;
    return V;
}

Eigen::MatrixXd evaluation_points(int d, Rng& rng) {
    return d <= exhaustive_max_d ? hypercube_points(d) : sample_hypercube_inputs(d, sampled_eval_points, rng);
}

MarginReport margin_of(const Eigen::MatrixXd& G, const Eigen::VectorXd& y, const DownstreamHead& h) {
    const Eigen::VectorXd pred = head_predictions(G, h);
    const double norm = std::sqrt(h.a.squaredNorm() + h.tau * h.tau);
    MarginReport rep;
    rep.head = h;
    rep.separable = true;
    double worst = std::numeric_limits<double>::infinity();
    for (Eigen::Index l = 0; l < pred.size(); ++l) {
        const double s = y(l) * pred(l);
        rep.separable = rep.separable && s > 0.0;
        worst = std::min(worst, s);
    }
    rep.margin = norm > 0.0 ? worst / norm : 0.0;
    return rep;
}

MarginReport margin_check(const Eigen::MatrixXd& G, const Eigen::VectorXd& y, int iters_per_stage) {
    DownstreamHead head{Eigen::VectorXd::Zero(G.cols()), 0.0};
    int done = 0;
    for (double lambda : margin_lambdas) {
        head = train_head(G, y, lambda, iters_per_stage, done ? &head : nullptr, done).head;
        done += iters_per_stage;
    }
    return margin_of(G, y, head);
}

MarginReport margin_check(const EmbeddingStack& stack, const LabelTable& table, int r, int d, Rng& rng,
                          int iters_per_stage) {
    if (table.r() != r) throw invalid_argument("margin_check: table r does not match");
    if (stack.input_dim() != d) throw invalid_argument("margin_check: stack input dimension does not match d");
    const Eigen::MatrixXd V = evaluation_points(d, rng);
    return margin_check(stack.embed_all(V), labels(table, V), iters_per_stage);
}

GapStats embedding_gap(const EmbeddingStack& learned, const EmbeddingStack& purified, const Eigen::MatrixXd& V) {
    if (learned.shared_id != purified.shared_id || learned.layer1_b != purified.layer1_b ||
        learned.layer2_W != purified.layer2_W || learned.layer2_b != purified.layer2_b)
        throw contract_violation("embedding_gap: stacks do not share randomness");
    if (V.rows() == 0) throw invalid_argument("embedding_gap: no inputs");
    const Eigen::MatrixXd diff = learned.embed_all(V) - purified.embed_all(V);
    GapStats out;
    out.gaps.resize(static_cast<std::size_t>(V.rows()));
    for (Eigen::Index l = 0; l < V.rows(); ++l) out.gaps[static_cast<std::size_t>(l)] = diff.row(l).norm();
    out.median = median(out.gaps);
    out.max = *std::max_element(out.gaps.begin(), out.gaps.end());
    return out;
}

}  // namespace mtfl
