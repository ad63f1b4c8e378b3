#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mtfl/downstream.hpp"
#include "mtfl/errors.hpp"
#include "mtfl/io.hpp"
#include "mtfl/pretrain.hpp"

using namespace mtfl;

namespace {

EmbeddingPair small_pair(Rng& rng, int d = 8, int r = 2, int m = 12, int m_hat = 20) {
    const double nu_w = std::pow(d, -1.25);
    const auto p = symmetric_init(d, r, m, 1, nu_w, 0.1, rng);
    Eigen::MatrixXd Wp = p.W;
    fill_normal(Wp, rng, nu_w * 0.1);
    const auto [g, gh] = default_downstream_scales(r);
    return build_embedding_pair(p.W, Wp, r, 1.0, nu_w, m_hat, g, gh, rng);
}

Eigen::VectorXd naive_embed(const EmbeddingStack& s, const Eigen::VectorXd& v) {
    const auto m_bar = s.layer1_W.rows(), m_hat = s.layer2_W.rows();
    std::vector<double> h(static_cast<std::size_t>(m_bar));
    for (Eigen::Index j = 0; j < m_bar; ++j) {
        double z = s.layer1_b(j);
        for (Eigen::Index k = 0; k < v.size(); ++k) z += s.layer1_W(j, k) * v(k);
        h[static_cast<std::size_t>(j)] = std::max(z, 0.0);
    }
    Eigen::VectorXd out(m_hat);
    for (Eigen::Index i = 0; i < m_hat; ++i) {
        double z = s.layer2_b(i);
        for (Eigen::Index j = 0; j < m_bar; ++j) z += s.layer2_W(i, j) * h[static_cast<std::size_t>(j)];
        out(i) = std::max(z, 0.0);
    }
    return out;
}

// Coarse-to-fine grid search; the objective is convex so each zoom keeps the minimiser.
double grid_minimum(const Eigen::MatrixXd& G, const Eigen::VectorXd& y, double lambda) {
    const int dim = static_cast<int>(G.cols()) + 1;
    const int pts = 17;
    Eigen::VectorXd center = Eigen::VectorXd::Zero(dim);
    double half = std::sqrt(2.0 / lambda);
    double best = INFINITY;
    for (int zoom = 0; zoom < 14; ++zoom) {
        const double step = 2.0 * half / (pts - 1);
        Eigen::VectorXd best_theta = center;
        std::vector<int> idx(static_cast<std::size_t>(dim), 0);
        for (;;) {
            Eigen::VectorXd theta(dim);
            for (int k = 0; k < dim; ++k) theta(k) = center(k) - half + step * idx[static_cast<std::size_t>(k)];
            const double f = head_objective(G, y, {theta.head(dim - 1), theta(dim - 1)}, lambda);
            if (f < best) {
                best = f;
                best_theta = theta;
            }
            int k = 0;
            while (k < dim && ++idx[static_cast<std::size_t>(k)] == pts) idx[static_cast<std::size_t>(k++)] = 0;
            if (k == dim) break;
        }
        center = best_theta;
        half = 2.0 * step;
    }
    return best;
}

}  // namespace

TEST(Rescale, Values) {
    EXPECT_DOUBLE_EQ(stated_learned_rescale(2, 1.0, 32), 4.0);
    EXPECT_DOUBLE_EQ(purified_rescale(0.5, 16), 1.0);
    EXPECT_DOUBLE_EQ(learned_rescale(2, 1.0, 0.5, 16), 16.0);
}

TEST(DefaultScales, Values) {
    const auto [g1, gh1] = default_downstream_scales(1);
    EXPECT_EQ(g1, 1.0);
    EXPECT_EQ(gh1, 1.0);
    const auto [g3, gh3] = default_downstream_scales(3);
    EXPECT_NEAR(g3, 1.9028, 1e-4);
    EXPECT_NEAR(gh3, 27.0 * std::pow(std::log(3.0), 4), 1e-12);
    EXPECT_NEAR(gh3, 39.35, 0.02);
    for (int r = 1; r < 10; ++r) {
        const auto [g, gh] = default_downstream_scales(r);
        EXPECT_GT(g, 0.0);
        EXPECT_GT(gh, 0.0);
    }
}

TEST(EmbeddingPair, SharedRandomnessAndBounds) {
    Rng rng(1);
    const auto pair = small_pair(rng);
    EXPECT_EQ(pair.learned.layer1_b, pair.purified.layer1_b);
    EXPECT_EQ(pair.learned.layer2_W, pair.purified.layer2_W);
    EXPECT_EQ(pair.learned.layer2_b, pair.purified.layer2_b);
    EXPECT_EQ(pair.learned.shared_id, pair.purified.shared_id);
    const double b1 = std::sqrt(2.0) * pair.learned.gamma / std::sqrt(6.0);
    const double b2 = std::sqrt(2.0) * pair.learned.gamma_hat / std::sqrt(20.0);
    EXPECT_LE(pair.learned.layer1_b.cwiseAbs().maxCoeff(), b1);
    EXPECT_LE(pair.learned.layer2_b.cwiseAbs().maxCoeff(), b2);
    EXPECT_TRUE(pair.purified.layer1_W.rightCols(6).isZero(0.0));
    EXPECT_EQ(pair.learned.variant, StackVariant::learned);
    EXPECT_EQ(pair.purified.variant, StackVariant::purified);
}

TEST(EmbeddingPair, OddWidthRejected) {
    Rng rng(2);
    const Eigen::MatrixXd W = Eigen::MatrixXd::Ones(5, 4);
    EXPECT_THROW(build_embedding_pair(W, W, 2, 1.0, 0.1, 4, 1.0, 1.0, rng), invalid_argument);
}

TEST(Embed, PurifiedIgnoresSpuriousCoordinates) {
    Rng rng(3);
    const auto pair = small_pair(rng);
    for (int k = 0; k < 50; ++k) {
        Eigen::MatrixXd V = sample_hypercube_inputs(8, 2, rng);
        V.row(1).head(2) = V.row(0).head(2);
        const Eigen::MatrixXd G = pair.purified.embed_all(V);
        EXPECT_EQ(G.row(0), G.row(1));
    }
}

TEST(Embed, ZeroWeightsGiveReluOfBias) {
    Rng rng(4);
    auto s = small_pair(rng).learned;
    s.layer1_W.setZero();
    s.layer2_W.setZero();
    const Eigen::VectorXd v = Eigen::VectorXd::Ones(8);
    EXPECT_EQ(embed(s, std::span<const double>(v.data(), 8)), s.layer2_b.cwiseMax(0.0));
}

TEST(Embed, MatchesLoopOracleAndIsNonNegative) {
    Rng rng(5);
    const auto pair = small_pair(rng);
    const auto V = sample_hypercube_inputs(8, 200, rng);
    const auto G = pair.learned.embed_all(V);
    EXPECT_GE(G.minCoeff(), 0.0);
    for (Eigen::Index l = 0; l < V.rows(); ++l) {
        const Eigen::VectorXd v = V.row(l).transpose();
        const auto one = embed(pair.learned, std::span<const double>(v.data(), 8));
        EXPECT_LT((one - naive_embed(pair.learned, v)).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_LT((one - G.row(l).transpose()).cwiseAbs().maxCoeff(), 1e-12);
    }
    const Eigen::VectorXd bad = Eigen::VectorXd::Ones(7);
    EXPECT_THROW(embed(pair.learned, std::span<const double>(bad.data(), 7)), invalid_argument);
}

TEST(TrainHead, ConstantLabelsRealizable) {
    const Eigen::MatrixXd G = Eigen::MatrixXd::Constant(10, 4, 0.7);
    const Eigen::VectorXd y = Eigen::VectorXd::Ones(10);
    double prev = INFINITY;
    for (double lambda : {1e-1, 1e-2, 1e-3}) {
        const auto h = train_head(G, y, lambda, 5000).head;
        const double loss = eval_loss(G, h, y);
        EXPECT_LE(loss, prev + 1e-12);
        prev = loss;
    }
    EXPECT_LT(prev, 0.01);
}

TEST(TrainHead, SeparableTwoPoints) {
    Eigen::MatrixXd G(2, 2);
    G << 1, 0, 0, 1;
    const Eigen::VectorXd y = (Eigen::VectorXd(2) << 1, -1).finished();
    const auto h = train_head(G, y, 1e-3, 10000).head;
    EXPECT_LT(eval_loss(G, h, y), 0.05);
}

TEST(TrainHead, WithinOnePercentOfGridOracle) {
    Rng rng(6);
    Eigen::MatrixXd G(5, 3);
    for (auto& v : G.reshaped()) v = uniform(rng, 0.0, 2.0);
    const Eigen::VectorXd y = (Eigen::VectorXd(5) << 1, -1, 1, 1, -1).finished();
    const double lambda = 0.1;
    const double oracle = grid_minimum(G, y, lambda);
    const auto trained = train_head(G, y, lambda, 20000);
    EXPECT_LE(trained.report.final_objective, oracle * 1.01);
    EXPECT_GE(trained.report.final_objective, oracle * (1.0 - 1e-6) - 1e-12);
}

TEST(TrainHead, CheckpointsMonotone) {
    Rng rng(7);
    const auto pair = small_pair(rng, 10, 2, 16, 64);
    const auto V = sample_hypercube_inputs(10, 400, rng);
    const auto y = labels(LabelTable::from_string(2, "+--+"), V);
    const auto G = pair.learned.embed_all(V);
    for (double lambda : {1e-2, 1e-3}) {
        const auto rep = train_head(G, y, lambda, 3000).report;
        ASSERT_EQ(rep.checkpoints.size(), 30u);
        for (std::size_t k = 1; k < rep.checkpoints.size(); ++k)
            EXPECT_LE(rep.checkpoints[k], rep.checkpoints[k - 1] + 1e-9);
        EXPECT_TRUE(rep.converged);
    }
}

TEST(TrainHead, RejectsBadInputs) {
    const Eigen::MatrixXd G = Eigen::MatrixXd::Ones(3, 2);
    const Eigen::VectorXd y = Eigen::VectorXd::Ones(3);
    EXPECT_THROW(train_head(G, y, 0.0, 10), invalid_argument);
    EXPECT_THROW(train_head(Eigen::MatrixXd(0, 2), Eigen::VectorXd(0), 1e-3, 10), invalid_argument);
}

TEST(EvalLoss, ZeroHeadAndPerfectHead) {
    Rng rng(8);
    const auto pair = small_pair(rng);
    const auto V = hypercube_points(8);
    const auto table = LabelTable::from_string(2, "+-+-");
    const DownstreamHead zero{Eigen::VectorXd::Zero(20), 0.0};
    EXPECT_EQ(eval_loss(pair.learned, zero, table, V), 1.0);

    const Eigen::MatrixXd G = Eigen::MatrixXd::Identity(4, 4);
    const Eigen::VectorXd y = (Eigen::VectorXd(4) << 1, -1, -1, 1).finished();
    const DownstreamHead perfect{2.0 * y, 0.0};
    EXPECT_EQ(eval_loss(G, perfect, y), 0.0);
    EXPECT_EQ(eval_accuracy(G, perfect, y), 1.0);
}

TEST(EvalLoss, ExhaustiveEqualsPermutedDistinctSample) {
    Rng rng(9);
    const auto pair = small_pair(rng, 10, 2, 12, 16);
    const auto V = hypercube_points(10);
    EXPECT_EQ(V.rows(), 1024);
    std::vector<Eigen::Index> order(1024);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    Eigen::MatrixXd S(1024, 10);
    for (Eigen::Index k = 0; k < 1024; ++k) S.row(k) = V.row(order[static_cast<std::size_t>(k)]);
    const auto table = LabelTable::from_string(2, "+--+");
    DownstreamHead h{Eigen::VectorXd(16), 0.3};
    fill_normal(h.a, rng);
    EXPECT_NEAR(eval_loss(pair.learned, h, table, V), eval_loss(pair.learned, h, table, S), 1e-12);
    EXPECT_DOUBLE_EQ(eval_accuracy(pair.learned, h, table, V), eval_accuracy(pair.learned, h, table, S));
}

TEST(EvaluationPoints, ExhaustiveOrSampled) {
    Rng rng(10);
    const auto V = hypercube_points(3);
    EXPECT_EQ(V.row(5), (Eigen::RowVectorXd(3) << 1, -1, 1).finished());
    EXPECT_EQ(evaluation_points(16, rng).rows(), 65536);
    EXPECT_EQ(evaluation_points(17, rng).rows(), sampled_eval_points);
}

TEST(Margin, SinglePoint) {
    const Eigen::MatrixXd G = (Eigen::MatrixXd(1, 2) << 0.5, 1.5).finished();
    const Eigen::VectorXd y = Eigen::VectorXd::Constant(1, -1.0);
    const auto rep = margin_check(G, y, 500);
    EXPECT_TRUE(rep.separable);
    EXPECT_GT(rep.margin, 0.0);
    const double norm = std::sqrt(rep.head.a.squaredNorm() + rep.head.tau * rep.head.tau);
    EXPECT_NEAR(rep.margin, std::abs(head_predictions(G, rep.head)(0)) / norm, 1e-12);
}

TEST(Margin, CollapsedClassesNotSeparable) {
    const Eigen::MatrixXd G = Eigen::MatrixXd::Constant(4, 3, 0.4);
    const Eigen::VectorXd y = (Eigen::VectorXd(4) << 1, -1, 1, -1).finished();
    EXPECT_FALSE(margin_check(G, y, 500).separable);
}

TEST(Margin, ScaleInvariant) {
    Rng rng(11);
    Eigen::MatrixXd G(30, 5);
    fill_normal(G, rng);
    Eigen::VectorXd y(30);
    for (auto& v : y) v = rademacher(rng);
    DownstreamHead h{Eigen::VectorXd(5), -0.2};
    fill_normal(h.a, rng);
    const double base = margin_of(G, y, h).margin;
    for (double c : {1e-3, 0.5, 3.0, 1e5}) {
        const DownstreamHead s{c * h.a, c * h.tau};
        EXPECT_NEAR(margin_of(G, y, s).margin, base, 1e-12 * std::max(1.0, std::abs(base)));
    }
}

TEST(Margin, LearnedStackSeparatesXor) {
    const auto c = PretrainConfig::with_defaults(32, 2, 64, 4096, 512, 0);
    const auto res = pretrain(c);
    auto rng = make_rng(0, Stream::embedding);
    const auto [g, gh] = default_downstream_scales(2);
    const auto pair = build_embedding_pair(res.W0(), res.Wplus, 2, c.eta, c.nu_w, 128, g, gh, rng);
    auto eval_rng = make_rng(0, Stream::head_eval);
    const auto rep = margin_check(pair.learned, LabelTable::from_string(2, "+--+"), 2, 32, eval_rng, 1000);
    EXPECT_TRUE(rep.separable);
}

TEST(Gap, ZeroForIdealUpdate) {
    Rng rng(12);
    const int d = 8, r = 2, m = 12;
    const double nu_w = std::pow(d, -1.25);
    const auto p = symmetric_init(d, r, m, 1, nu_w, 0.1, rng);
    Eigen::MatrixXd Wp = Eigen::MatrixXd::Zero(m, d);
    Wp.leftCols(r) = std::ldexp(1.0, -r - 2) * p.W.leftCols(r);
    const auto pair = build_embedding_pair(p.W, Wp, r, 1.0, nu_w, 16, 1.0, 1.0, rng);
    const auto gap = embedding_gap(pair.learned, pair.purified, hypercube_points(d));
    EXPECT_EQ(gap.max, 0.0);
}

TEST(Gap, NonNegativeFiniteAndCoupled) {
    Rng rng(13);
    const auto pair = small_pair(rng);
    const auto gap = embedding_gap(pair.learned, pair.purified, hypercube_points(8));
    for (double g : gap.gaps) {
        EXPECT_GE(g, 0.0);
        EXPECT_TRUE(std::isfinite(g));
    }
    EXPECT_LE(gap.median, gap.max);
    const auto other = small_pair(rng);
    EXPECT_THROW(embedding_gap(pair.learned, other.purified, hypercube_points(8)), contract_violation);
}

TEST(StackIo, RoundTrip) {
    Rng rng(14);
    const auto pair = small_pair(rng);
    const auto stem = std::filesystem::temp_directory_path() / "mtfl_stack_roundtrip";
    write_stack(stem, pair.purified);
    const auto back = read_stack(stem);
    EXPECT_EQ(back.layer1_W, pair.purified.layer1_W);
    EXPECT_EQ(back.layer2_b, pair.purified.layer2_b);
    EXPECT_EQ(back.shared_id, pair.purified.shared_id);
    EXPECT_EQ(back.variant, StackVariant::purified);
    EXPECT_EQ(back.scale, pair.purified.scale);
}
