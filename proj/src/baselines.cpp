#include "mtfl/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "mtfl/errors.hpp"
#include "mtfl/linalg.hpp"
#include "mtfl/parallel.hpp"

namespace mtfl {

ParityTask::ParityTask(std::vector<int> support, int d) : support_(std::move(support)), d_(d) {
    std::set<int> seen;
    for (int i : support_) {
        if (i < 0 || i >= d) throw invalid_argument("ParityTask: support index out of range");
        if (!seen.insert(i).second) throw invalid_argument("ParityTask: support indices must be distinct");
    }
}

int parity_label(const ParityTask& task, std::span<const double> v) {
    if (static_cast<int>(v.size()) != task.d()) throw invalid_argument("parity_label: wrong input length");
    int sign = 1;
    for (int i : task.support())
        if (v[static_cast<std::size_t>(i)] < 0.0) sign = -sign;
    return sign;
}

Eigen::VectorXd parity_labels(const ParityTask& task, const Eigen::MatrixXd& V) {
    if (V.cols() != task.d()) throw invalid_argument("parity_labels: wrong input length");
    Eigen::VectorXd y(V.rows());
    for (Eigen::Index l = 0; l < V.rows(); ++l) {
        int sign = 1;
        for (int i : task.support())
            if (V(l, i) < 0.0) sign = -sign;
        y(l) = sign;
    }
    return y;
}

Eigen::MatrixXd RandomFeatures::embed_all(const Eigen::MatrixXd& V) const {
    if (V.cols() != W.cols()) throw invalid_argument("random features: wrong input length");
    if (norm_bound == 0.0) return Eigen::MatrixXd::Zero(V.rows(), W.rows());
    Eigen::MatrixXd Z = V * W.transpose();
    Z.rowwise() += b.transpose();
    return Z.cwiseMax(0.0) / norm_bound;
}

Eigen::VectorXd RandomFeatures::embed(std::span<const double> v) const {
    const Eigen::Map<const Eigen::RowVectorXd> row(v.data(), static_cast<Eigen::Index>(v.size()));
    return embed_all(Eigen::MatrixXd(row)).row(0).transpose();
}

RandomFeatures random_feature_embedding(Eigen::MatrixXd W, Eigen::VectorXd b) {
    if (W.rows() != b.size()) throw invalid_argument("random_feature_embedding: shape mismatch");
    RandomFeatures rf;
    rf.norm_bound = spectral_norm(W) * std::sqrt(static_cast<double>(W.cols())) + b.norm();
    rf.W = std::move(W);
    rf.b = std::move(b);
    return rf;
}

RandomFeatures random_feature_embedding(int d, int m_hat, Rng& rng) {
    if (d < 1 || m_hat < 1) throw invalid_argument("random_feature_embedding: d and m_hat must be >= 1");
    Eigen::MatrixXd W(m_hat, d);
    fill_normal(W, rng, 1.0 / std::sqrt(static_cast<double>(d)));
    Eigen::VectorXd b(m_hat);
    for (auto& v : b) v = uniform(rng, -1.0, 1.0);
    return random_feature_embedding(std::move(W), std::move(b));
}

std::vector<int> support_first_order(const std::vector<int>& support, int d) {
    std::vector<int> order = support;
    std::vector<char> used(static_cast<std::size_t>(d), 0);
    for (int i : support) used[static_cast<std::size_t>(i)] = 1;
    for (int j = 0; j < d; ++j)
        if (!used[static_cast<std::size_t>(j)]) order.push_back(j);
    return order;
}

Eigen::MatrixXd PermutedStack::embed_all(const Eigen::MatrixXd& V) const {
    Eigen::MatrixXd P(V.rows(), V.cols());
    for (std::size_t k = 0; k < order.size(); ++k) P.col(static_cast<Eigen::Index>(k)) = V.col(order[k]);
    return stack->embed_all(P);
}

std::vector<std::string> SeparationConfig::violations() const {
    std::vector<std::string> v;
    if (d < 1) v.emplace_back("baseline d must be >= 1");
    if (r < 0 || r > d) v.emplace_back("baseline r must be in [0, d]");
    if (m_hat < 1) v.emplace_back("m_hat must be >= 1");
    if (n_train < 1) v.emplace_back("n_train must be >= 1");
    if (n_eval < 1) v.emplace_back("n_eval must be >= 1");
    if (seeds.empty()) v.emplace_back("seeds must be nonempty");
    if (n_supports < 0) v.emplace_back("n_supports must be >= 0");
    if (!(lambda_hat > 0.0)) v.emplace_back("lambda_hat must be > 0");
    if (n_iters < 1) v.emplace_back("n_iters must be >= 1");
    if (pretrain.d != d) v.emplace_back("pretrain d must equal baseline d");
    for (auto& s : pretrain.violations()) v.push_back("pretrain: " + s);
    return v;
}

std::vector<std::vector<int>> choose_supports(int d, int r, int n_supports, Rng& rng) {
    if (r < 0 || r > d) throw invalid_argument("choose_supports: need 0 <= r <= d");
    double total = 1.0;
    for (int i = 0; i < r; ++i) total = total * (d - i) / (i + 1);

    std::vector<std::vector<int>> out;
    if (total <= n_supports + 1.0) {
        // Lexicographic enumeration of all r-subsets.
        std::vector<int> cur(static_cast<std::size_t>(r));
        std::iota(cur.begin(), cur.end(), 0);
        while (true) {
            out.push_back(cur);
            int i = r - 1;
            while (i >= 0 && cur[static_cast<std::size_t>(i)] == d - r + i) --i;
            if (i < 0) break;
            ++cur[static_cast<std::size_t>(i)];
            for (int j = i + 1; j < r; ++j) cur[static_cast<std::size_t>(j)] = cur[static_cast<std::size_t>(j - 1)] + 1;
        }
        return out;
    }

    std::vector<int> truth(static_cast<std::size_t>(r));
    std::iota(truth.begin(), truth.end(), 0);
    std::set<std::vector<int>> seen{truth};
    out.push_back(truth);
    std::vector<int> all(static_cast<std::size_t>(d));
    while (static_cast<int>(out.size()) < n_supports + 1) {
        std::iota(all.begin(), all.end(), 0);
        // Partial Fisher-Yates with an explicit draw so the sequence is portable.
        for (int i = 0; i < r; ++i) {
            const auto j = i + static_cast<int>(rng() % static_cast<std::uint64_t>(d - i));
            std::swap(all[static_cast<std::size_t>(i)], all[static_cast<std::size_t>(j)]);
        }
        std::vector<int> s(all.begin(), all.begin() + r);
        std::sort(s.begin(), s.end());
        if (seen.insert(s).second) out.push_back(std::move(s));
    }
    return out;
}

ComparisonRecord separation_experiment(const SeparationConfig& config) {
    if (const auto v = config.violations(); !v.empty()) throw invalid_argument("separation_experiment: " + v.front());
    ComparisonRecord rec;

    for (std::uint64_t seed : config.seeds) {
        PretrainConfig pc = config.pretrain;
        pc.seed = seed;
        const auto pre = pretrain(pc);
        const auto [gamma, gamma_hat] = default_downstream_scales(pc.r);
        auto emb_rng = make_rng(seed, Stream::embedding);
        const auto pair = build_embedding_pair(pre.W0(), pre.Wplus, pc.r, pc.eta, pc.nu_w, config.m_hat, gamma,
                                               gamma_hat, emb_rng);
        auto rf_rng = make_rng(seed, Stream::random_features);
        const auto rf = random_feature_embedding(config.d, config.m_hat, rf_rng);
        auto sup_rng = make_rng(seed, Stream::supports);
        const auto supports = choose_supports(config.d, config.r, config.n_supports, sup_rng);

        std::vector<SupportResult> learned(supports.size()), random(supports.size());
        parallel_for(supports.size(), [&](std::size_t k) {
            const ParityTask task(supports[k], config.d);
            auto train_rng = make_rng(seed, Stream::head_train, k);
            auto eval_rng = make_rng(seed, Stream::head_eval, k);
            const auto Vt = sample_hypercube_inputs(config.d, config.n_train, train_rng);
            const auto Ve = sample_hypercube_inputs(config.d, config.n_eval, eval_rng);
            const auto yt = parity_labels(task, Vt);
            const auto ye = parity_labels(task, Ve);

            const PermutedStack permuted{&pair.learned, support_first_order(supports[k], config.d)};
            auto run = [&](const auto& emb, const char* name) {
                const auto trained = train_head(emb.embed_all(Vt), yt, config.lambda_hat, config.n_iters);
                const auto Ge = emb.embed_all(Ve);
                return SupportResult{seed,
                                     supports[k],
                                     name,
                                     eval_loss(Ge, trained.head, ye),
                                     eval_accuracy(Ge, trained.head, ye),
                                     trained.report.final_objective};
            };
            learned[k] = run(permuted, "learned");
            random[k] = run(rf, "random");
        });

        SeedSummary sum;
        sum.seed = seed;
        sum.learned_worst = sum.random_worst = 1.0;
        for (std::size_t k = 0; k < supports.size(); ++k) {
            sum.learned_worst = std::min(sum.learned_worst, learned[k].eval_accuracy);
            sum.random_worst = std::min(sum.random_worst, random[k].eval_accuracy);
            sum.learned_mean += learned[k].eval_accuracy;
            sum.random_mean += random[k].eval_accuracy;
            rec.rows.push_back(learned[k]);
            rec.rows.push_back(random[k]);
        }
        sum.learned_mean /= static_cast<double>(supports.size());
        sum.random_mean /= static_cast<double>(supports.size());
        rec.seeds.push_back(sum);
    }

    std::vector<double> lw, rw, gap;
    for (const auto& s : rec.seeds) {
        lw.push_back(s.learned_worst);
        rw.push_back(s.random_worst);
        gap.push_back(s.learned_worst - s.random_worst);
    }
    rec.median_learned_worst = median(lw);
    rec.median_random_worst = median(rw);
    rec.median_gap = median(gap);
    return rec;
}

}  // namespace mtfl
