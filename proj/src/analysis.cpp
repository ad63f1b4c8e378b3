#include "mtfl/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "mtfl/errors.hpp"
#include "mtfl/linalg.hpp"
#include "mtfl/parallel.hpp"

namespace mtfl {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr std::int64_t mc_chunk = 16384;
constexpr std::int64_t mc_min_chunks = 8;

void check_split(const Eigen::MatrixXd& W, int r) {
    if (r < 1 || r >= W.cols()) throw invalid_argument("projection: need 1 <= r < d");
}

void check_w(const Eigen::VectorXd& w, int r) {
    if (r < 1 || r >= w.size()) throw invalid_argument("A blocks: need 1 <= r < d");
    if (w.tail(w.size() - r).squaredNorm() == 0.0) throw invalid_argument("A blocks: w_{r:} must be nonzero");
}

Eigen::MatrixXd top_half(const Eigen::MatrixXd& W) {
    if (W.rows() % 2 != 0) throw invalid_argument("expected an even number of rows");
    return W.topRows(W.rows() / 2);
}

}  // namespace

Eigen::MatrixXd project_parallel(const Eigen::MatrixXd& W, int r) {
    check_split(W, r);
    return W.leftCols(r);
}

Eigen::MatrixXd project_perp(const Eigen::MatrixXd& W, int r) {
    check_split(W, r);
    return W.rightCols(W.cols() - r);
}

double parallel_coefficient(int r, double eta) { return eta * eta * std::ldexp(1.0, -r - 2); }

RecoveryMetrics recovery_metrics(const Eigen::MatrixXd& W0, const Eigen::MatrixXd& Wplus, int r, double eta,
                                 double nu_w) {
    if (W0.rows() != Wplus.rows() || W0.cols() != Wplus.cols())
        throw invalid_argument("recovery_metrics: shape mismatch");
    const Eigen::MatrixXd A0 = top_half(W0);
    const Eigen::MatrixXd A = top_half(Wplus);
    const int m_bar = static_cast<int>(A.rows());
    const double c = parallel_coefficient(r, eta);
    const double denom = nu_w * std::sqrt(static_cast<double>(m_bar));

    const Eigen::MatrixXd par = project_parallel(A, r);
    const Eigen::MatrixXd par0 = project_parallel(A0, r);
    const Eigen::MatrixXd perp = project_perp(A, r);
    const Eigen::MatrixXd perp0 = project_perp(A0, r);
    const double perp_norm = spectral_norm(perp);
    const double sig_r = kth_singular_value(par, r);

    RecoveryMetrics out;
    out.m_bar = m_bar;
    out.prop1_parallel_residual = spectral_norm(par - c * par0) / denom;
    out.prop1_perp_norm = perp_norm / denom;
    out.thm1_ratio = sig_r > 0.0 ? perp_norm / sig_r : std::numeric_limits<double>::infinity();

    std::vector<double> residual, suppression, ratio;
    for (int j = 0; j < m_bar; ++j) {
        const Eigen::VectorXd p0 = par0.row(j).transpose();
        const double target = c * p0.norm();
        residual.push_back((par.row(j).transpose() - c * p0).norm() / target);
        suppression.push_back(perp.row(j).norm() / perp0.row(j).norm());
        ratio.push_back(par.row(j).dot(p0) / (c * p0.squaredNorm()));
    }
    out.median_coefficient_residual = median(residual);
    out.median_perp_suppression = median(suppression);
    out.median_coefficient_ratio = median(ratio);
    return out;
}

double beta(const TaskSet& ts, std::span<const double> x, std::span<const double> xp) {
    if (ts.tables.empty()) throw invalid_argument("beta: empty task set");
    const auto r = static_cast<std::size_t>(ts.r);
    if (x.size() < r || xp.size() < r) throw invalid_argument("beta: inputs shorter than r");
    const auto u = sign_pattern(x.first(r)).code;
    const auto v = sign_pattern(xp.first(r)).code;
    long agree = 0;
    for (const auto& t : ts.tables) agree += t.entry(u) * t.entry(v);
    return static_cast<double>(agree) / static_cast<double>(ts.tables.size());
}

ContrastiveReport contrastive_loss_pair(const Eigen::MatrixXd& W, const TaskSet& ts, const Eigen::MatrixXd& X,
                                        double eta) {
    if (ts.tables.empty() || X.rows() == 0) throw invalid_argument("contrastive_loss_pair: empty input");
    const Eigen::Index n = X.rows();
    const auto T = static_cast<Eigen::Index>(ts.tables.size());
    const auto codes = pattern_codes(X, ts.r);
    Eigen::MatrixXd Y(T, n);
    for (Eigen::Index i = 0; i < T; ++i)
        for (Eigen::Index l = 0; l < n; ++l) Y(i, l) = ts.tables[static_cast<std::size_t>(i)].entry(codes[static_cast<std::size_t>(l)]);

    const Eigen::MatrixXd H = (X * W.transpose()).cwiseMax(0.0);
    const Eigen::MatrixXd heads = eta * Y * H / static_cast<double>(n);
    const Eigen::MatrixXd pred = heads * H.transpose();

    ContrastiveReport out;
    out.n = static_cast<int>(n);
    out.T = static_cast<int>(T);
    double loss = 0.0;
    std::int64_t active = 0, clipped = 0;
    for (Eigen::Index i = 0; i < T; ++i)
        for (Eigen::Index l = 0; l < n; ++l) {
            const double margin = Y(i, l) * pred(i, l);
            loss += std::max(1.0 - margin, 0.0);
            active += std::abs(pred(i, l)) > 1.0;
            clipped += margin > 1.0;
        }
    const double count = static_cast<double>(T * n);
    out.exact_loss = loss / count;
    out.threshold_activity_rate = static_cast<double>(active) / count;
    out.clipped_rate = static_cast<double>(clipped) / count;

    const Eigen::MatrixXd B = Y.transpose() * Y / static_cast<double>(T);
    const Eigen::MatrixXd K = H * H.transpose();
    out.contrastive_approx = 1.0 - eta * B.cwiseProduct(K).mean();
    return out;
}

ABlockEstimate estimate_A_blocks(const Eigen::VectorXd& w, int r, std::int64_t n_mc, Rng& rng) {
    return estimate_A_blocks_seeded(w, r, n_mc, rng());
}

ABlockEstimate estimate_A_blocks_seeded(const Eigen::VectorXd& w, int r, std::int64_t n_mc, std::uint64_t seed) {
    check_w(w, r);
    if (n_mc < 1) throw invalid_argument("estimate_A_blocks: n_mc must be positive");
    const Eigen::Index d = w.size();
    const std::int64_t chunks = std::max(mc_min_chunks, (n_mc + mc_chunk - 1) / mc_chunk);
    const std::int64_t base = n_mc / chunks, extra = n_mc % chunks;

    std::vector<Eigen::MatrixXd> sums(static_cast<std::size_t>(chunks));
    std::vector<std::int64_t> sizes(static_cast<std::size_t>(chunks));
    parallel_for(static_cast<std::size_t>(chunks), [&](std::size_t c) {
        const std::int64_t size = base + (static_cast<std::int64_t>(c) < extra ? 1 : 0);
        sizes[c] = size;
        auto local = make_rng(seed, Stream::monte_carlo, c);
        RowMatrix X(size, d), Xp(size, d);
        std::vector<char> keep(static_cast<std::size_t>(size));
        std::int64_t kept = 0;
        for (std::int64_t l = 0; l < size; ++l) {
            for (int j = 0; j < r; ++j) {
                const double u = rademacher(local);
                X(l, j) = u * std::abs(standard_normal(local));
                Xp(l, j) = u * std::abs(standard_normal(local));
            }
            for (Eigen::Index j = r; j < d; ++j) X(l, j) = standard_normal(local);
            for (Eigen::Index j = r; j < d; ++j) Xp(l, j) = standard_normal(local);
            const bool on = X.row(l).dot(w) > 0.0 && Xp.row(l).dot(w) > 0.0;
            keep[static_cast<std::size_t>(l)] = on;
            kept += on;
        }
        RowMatrix Xa(kept, d), Xpa(kept, d);
        for (std::int64_t l = 0, k = 0; l < size; ++l)
            if (keep[static_cast<std::size_t>(l)]) {
                Xa.row(k) = X.row(l);
                Xpa.row(k) = Xp.row(l);
                ++k;
            }
        sums[c] = Xa.transpose() * Xpa;
    });

    std::vector<Eigen::MatrixXd> means(sums.size());
    for (std::size_t c = 0; c < sums.size(); ++c) means[c] = sums[c] / static_cast<double>(sizes[c]);
    const Eigen::MatrixXd A = tree_reduce(std::move(sums)) / static_cast<double>(n_mc);

    const Eigen::Index q = d - r;
    ABlockEstimate out;
    out.n_mc = n_mc;
    out.seed = seed;
    out.A_pp = A.topLeftCorner(r, r);
    out.A_pq = A.topRightCorner(r, q);
    out.A_qp = A.bottomLeftCorner(q, r);
    out.A_qq = A.bottomRightCorner(q, q);

    double v_pp = 0, v_pq = 0, v_qp = 0, v_qq = 0;
    for (const auto& M : means) {
        const Eigen::MatrixXd D = M - A;
        v_pp += D.topLeftCorner(r, r).squaredNorm();
        v_pq += D.topRightCorner(r, q).squaredNorm();
        v_qp += D.bottomLeftCorner(q, r).squaredNorm();
        v_qq += D.bottomRightCorner(q, q).squaredNorm();
    }
    const double k = static_cast<double>(chunks);
    const double norm = k * (k - 1.0);
    out.se_pp = std::sqrt(v_pp / norm);
    out.se_pq = std::sqrt(v_pq / norm);
    out.se_qp = std::sqrt(v_qp / norm);
    out.se_qq = std::sqrt(v_qq / norm);
    return out;
}

APQCandidates a_pq_candidates(const Eigen::VectorXd& w, int r) {
    check_w(w, r);
    const Eigen::VectorXd wp = w.head(r);
    const Eigen::VectorXd wq = w.tail(w.size() - r);
    const double nq2 = wq.squaredNorm();
    const Eigen::MatrixXd outer = wp * wq.transpose();
    return {2.0 / (std::numbers::pi * nq2) * outer, outer / (2.0 * std::numbers::pi * nq2)};
}

ABlockTheory a_block_closed_forms(const Eigen::VectorXd& w, int r) {
    check_w(w, r);
    const Eigen::VectorXd wp = w.head(r);
    const Eigen::VectorXd wq = w.tail(w.size() - r);
    const double nq2 = wq.squaredNorm();
    ABlockTheory out;
    out.A_pp = 0.25 * Eigen::MatrixXd::Identity(r, r);
    out.A_pq = a_pq_candidates(w, r).appendix;
    out.A_qq = (1.0 - wp.squaredNorm() / nq2) * wq * wq.transpose() / (2.0 * std::numbers::pi * nq2);
    return out;
}

APQAdjudication adjudicate_a_pq(int d, int r, int probes, std::int64_t n_mc, std::uint64_t seed) {
    if (probes < 1) throw invalid_argument("adjudicate_a_pq: need at least one probe");
    APQAdjudication out;
    for (int k = 0; k < probes; ++k) {
        auto rng = make_rng(seed, Stream::probes, static_cast<std::uint64_t>(k));
        Eigen::VectorXd w(d);
        fill_normal(w, rng);
        const auto est = estimate_A_blocks_seeded(w, r, n_mc, derive_seed(seed, Stream::monte_carlo, k));
        const auto cand = a_pq_candidates(w, r);
        out.main_text_errors.push_back((est.A_pq - cand.main_text).norm());
        out.appendix_errors.push_back((est.A_pq - cand.appendix).norm());
    }
    auto mean = [](const std::vector<double>& v) {
        double s = 0;
        for (double x : v) s += x;
        return s / static_cast<double>(v.size());
    };
    out.main_text_mean = mean(out.main_text_errors);
    out.appendix_mean = mean(out.appendix_errors);
    out.appendix_wins = out.appendix_mean < out.main_text_mean;
    const double lo = std::min(out.main_text_mean, out.appendix_mean);
    const double hi = std::max(out.main_text_mean, out.appendix_mean);
    out.ratio = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
    return out;
}

InitSanityReport init_sanity(const Eigen::MatrixXd& W0, double nu_w, int m, int r) {
    const Eigen::MatrixXd A = top_half(W0);
    const int m_bar = static_cast<int>(A.rows());
    const Eigen::Index d = A.cols();
    if (r < 1 || r >= d) throw invalid_argument("init_sanity: need 1 <= r < d");
    const double scale = nu_w > 0.0 ? nu_w : 1.0;
    const double spread = envelope_c * std::sqrt(std::log(static_cast<double>(m)));

    InitSanityReport rep;
    auto envelope = [&](double k, double& lo, double& hi) {
        lo = std::max(0.0, std::sqrt(k) - spread);
        hi = std::sqrt(k) + spread;
    };
    envelope(r, rep.para_lo, rep.para_hi);
    envelope(static_cast<double>(d - r), rep.perp_lo, rep.perp_hi);
    envelope(static_cast<double>(d), rep.full_lo, rep.full_hi);

    const Eigen::VectorXd para = A.leftCols(r).rowwise().norm() / scale;
    const Eigen::VectorXd perp = A.rightCols(d - r).rowwise().norm() / scale;
    const Eigen::VectorXd full = A.rowwise().norm() / scale;
    rep.para_min = para.minCoeff();
    rep.para_max = para.maxCoeff();
    rep.perp_min = perp.minCoeff();
    rep.perp_max = perp.maxCoeff();
    rep.full_min = full.minCoeff();
    rep.full_max = full.maxCoeff();
    rep.rows_within = rep.para_min >= rep.para_lo && rep.para_max <= rep.para_hi && rep.perp_min >= rep.perp_lo &&
                      rep.perp_max <= rep.perp_hi && rep.full_min >= rep.full_lo && rep.full_max <= rep.full_hi;

    const double denom = scale * std::sqrt(static_cast<double>(m_bar));
    rep.sigma_parallel_ratio = kth_singular_value(A.leftCols(r), r) / denom;
    rep.sigma_bound = 1.0 - 3.0 * std::sqrt(static_cast<double>(r)) / std::sqrt(static_cast<double>(m_bar));
    rep.sigma_ok = rep.sigma_parallel_ratio >= rep.sigma_bound;
    rep.sigma_min_full_ratio =
        kth_singular_value(A, static_cast<int>(std::min<Eigen::Index>(m_bar, d))) / denom;
    rep.ok = rep.rows_within && rep.sigma_ok;
    return rep;
}

}  // namespace mtfl
