#pragma once
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "mtfl/rng.hpp"
#include "mtfl/tasks.hpp"

namespace mtfl {

Eigen::MatrixXd project_parallel(const Eigen::MatrixXd& W, int r);
Eigen::MatrixXd project_perp(const Eigen::MatrixXd& W, int r);

// Computed on the m_bar = m/2 distinct (top) rows.
struct RecoveryMetrics {
    double prop1_parallel_residual = 0.0;
    double prop1_perp_norm = 0.0;
    double thm1_ratio = 0.0;  // +inf when sigma_r of the parallel block is 0
    int m_bar = 0;
    // Per-neuron medians: |w+_{j,:r} - c w0_{j,:r}| / |c w0_{j,:r}| and |w+_{j,r:}| / |w0_{j,r:}|.
    double median_coefficient_residual = 0.0;
    double median_perp_suppression = 0.0;
    // median over neurons of <w+_{j,:r}, w0_{j,:r}> / (c |w0_{j,:r}|^2)
    double median_coefficient_ratio = 0.0;
};

// c = eta^2 2^(-r-2)
double parallel_coefficient(int r, double eta);

RecoveryMetrics recovery_metrics(const Eigen::MatrixXd& W0, const Eigen::MatrixXd& Wplus, int r, double eta,
                                 double nu_w);

double beta(const TaskSet& ts, std::span<const double> x, std::span<const double> xp);

struct ContrastiveReport {
    double exact_loss = 0.0;
    double contrastive_approx = 0.0;
    double threshold_activity_rate = 0.0;  // fraction of (task, sample) with |a+ relu(Wx)| > 1
    double clipped_rate = 0.0;             // fraction with y a+ relu(Wx) > 1
    int n = 0;
    int T = 0;
};

// Heads come from the closed-form head step on the same sample set.
ContrastiveReport contrastive_loss_pair(const Eigen::MatrixXd& W, const TaskSet& ts, const Eigen::MatrixXd& X,
                                        double eta);

struct ABlockEstimate {
    Eigen::MatrixXd A_pp, A_pq, A_qp, A_qq;
    std::int64_t n_mc = 0;
    std::uint64_t seed = 0;
    // Frobenius standard errors from batch means over the fixed chunks.
    double se_pp = 0.0, se_pq = 0.0, se_qp = 0.0, se_qq = 0.0;
};

ABlockEstimate estimate_A_blocks(const Eigen::VectorXd& w, int r, std::int64_t n_mc, Rng& rng);
ABlockEstimate estimate_A_blocks_seeded(const Eigen::VectorXd& w, int r, std::int64_t n_mc, std::uint64_t seed);

struct ABlockTheory {
    Eigen::MatrixXd A_pp;  // I/4
    Eigen::MatrixXd A_pq;  // adjudicated candidate
    Eigen::MatrixXd A_qq;
};

struct APQCandidates {
    Eigen::MatrixXd main_text;  // 2/(pi |w_q|^2) w_p w_q^T
    Eigen::MatrixXd appendix;   // w_p w_q^T / (2 pi |w_q|^2)
};

ABlockTheory a_block_closed_forms(const Eigen::VectorXd& w, int r);
APQCandidates a_pq_candidates(const Eigen::VectorXd& w, int r);

struct APQAdjudication {
    std::vector<double> main_text_errors;  // Frobenius, one per probe
    std::vector<double> appendix_errors;
    double main_text_mean = 0.0;
    double appendix_mean = 0.0;
    bool appendix_wins = false;
    double ratio = 0.0;  // loser mean / winner mean
};

// Probes w ~ N(0, I_d) drawn from the seed; one estimate_A_blocks run per probe.
APQAdjudication adjudicate_a_pq(int d, int r, int probes, std::int64_t n_mc, std::uint64_t seed);

struct InitSanityReport {
    // Row norms divided by nu_w; envelopes sqrt(k) +- c sqrt(log m), lower clamped at 0.
    double para_min = 0.0, para_max = 0.0, para_lo = 0.0, para_hi = 0.0;
    double perp_min = 0.0, perp_max = 0.0, perp_lo = 0.0, perp_hi = 0.0;
    double full_min = 0.0, full_max = 0.0, full_lo = 0.0, full_hi = 0.0;
    bool rows_within = false;
    double sigma_parallel_ratio = 0.0;  // sigma_r(parallel block) / (nu_w sqrt(m_bar))
    double sigma_bound = 0.0;           // 1 - 3 sqrt(r) / sqrt(m_bar)
    bool sigma_ok = false;
    double sigma_min_full_ratio = 0.0;  // sigma_min(top rows) / (nu_w sqrt(m_bar))
    bool ok = false;
};

inline constexpr double envelope_c = 3.0;

InitSanityReport init_sanity(const Eigen::MatrixXd& W0, double nu_w, int m, int r);

}  // namespace mtfl
