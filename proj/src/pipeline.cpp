#include "mtfl/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <map>

#include "mtfl/analysis.hpp"
#include "mtfl/baselines.hpp"
#include "mtfl/downstream.hpp"
#include "mtfl/errors.hpp"
#include "mtfl/io.hpp"
#include "mtfl/linalg.hpp"
#include "mtfl/parallel.hpp"
#include "mtfl/pretrain.hpp"

namespace mtfl {

namespace {

namespace fs = std::filesystem;

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string utc_now() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

json matrix_json(const Eigen::MatrixXd& M) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < M.cols(); ++j) row.push_back(metric_value(M(i, j)));
        rows.push_back(row);
    }
    return rows;
}

std::string support_string(const std::vector<int>& s) {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) out += (i ? " " : "") + std::to_string(s[i]);
    return out;
}

class Outputs {
public:
    explicit Outputs(fs::path dir) : dir_(std::move(dir)) {}

    void text(const std::string& name, const std::string& content) {
        write_file_atomic(dir_ / name, content);
        files_.push_back(dir_ / name);
    }
    void params(const std::string& name, const NetParams& p) {
        write_netparams(dir_ / name, p);
        files_.push_back(dir_ / name);
    }
    void stack(const std::string& stem, const EmbeddingStack& s) {
        write_stack(dir_ / stem, s);
        files_.push_back(dir_ / (stem + ".bin"));
        files_.push_back(dir_ / (stem + ".json"));
    }
    std::vector<fs::path> take() { return std::move(files_); }

private:
    fs::path dir_;
    std::vector<fs::path> files_;
};

void put_recovery(json& m, const RecoveryMetrics& r, const std::string& prefix = "") {
    m[prefix + "prop1_parallel_residual"] = metric_value(r.prop1_parallel_residual);
    m[prefix + "prop1_perp_norm"] = metric_value(r.prop1_perp_norm);
    m[prefix + "thm1_ratio"] = metric_value(r.thm1_ratio);
    m[prefix + "m_bar"] = r.m_bar;
    m[prefix + "median_coefficient_residual"] = metric_value(r.median_coefficient_residual);
    m[prefix + "median_perp_suppression"] = metric_value(r.median_perp_suppression);
    m[prefix + "median_coefficient_ratio"] = metric_value(r.median_coefficient_ratio);
}

json run_pretrain(const ExperimentConfig& c, Outputs& out) {
    const auto pc = c.pretrain.resolve(c.seed);
    const auto res = pretrain(pc);
    out.params("init.bin", res.init);
    out.params("trained.bin", res.trained());
    out.text("tasks.json", taskset_to_json(res.tasks) + "\n");

    json m;
    put_recovery(m, recovery_metrics(res.W0(), res.Wplus, pc.r, pc.eta, pc.nu_w));
    if (pc.d > pc.r) {
        const auto s = init_sanity(res.W0(), pc.nu_w, pc.m, pc.r);
        m["init_rows_within_envelopes"] = s.rows_within;
        m["init_sigma_parallel_ratio"] = metric_value(s.sigma_parallel_ratio);
        m["init_sigma_bound"] = metric_value(s.sigma_bound);
        m["init_sigma_ok"] = s.sigma_ok;
        m["init_sigma_min_full_ratio"] = metric_value(s.sigma_min_full_ratio);
    }
    auto rng = make_rng(c.seed, Stream::contrastive);
    const auto X = sample_gaussian_inputs(pc.d, c.pretrain.n_contrastive, rng);
    const auto cr = contrastive_loss_pair(res.W0(), res.tasks, X, pc.eta);
    m["contrastive_exact_loss"] = metric_value(cr.exact_loss);
    m["contrastive_approx"] = metric_value(cr.contrastive_approx);
    m["contrastive_abs_diff"] = metric_value(std::abs(cr.exact_loss - cr.contrastive_approx));
    m["threshold_activity_rate"] = metric_value(cr.threshold_activity_rate);
    m["clipped_rate"] = metric_value(cr.clipped_rate);
    return m;
}

json run_verify(const ExperimentConfig& c, Outputs& out) {
    const auto& v = c.verify;
    json probes = json::array();
    std::vector<double> pp, qq, pq_main, pq_app;
    for (int k = 0; k < v.probes; ++k) {
        // Same derivation as adjudicate_a_pq, so both report identical estimates.
        auto rng = make_rng(c.seed, Stream::probes, static_cast<std::uint64_t>(k));
        Eigen::VectorXd w(v.d);
        fill_normal(w, rng);
        const auto est = estimate_A_blocks_seeded(w, v.r, v.n_mc, derive_seed(c.seed, Stream::monte_carlo, k));
        const auto th = a_block_closed_forms(w, v.r);
        const auto cand = a_pq_candidates(w, v.r);
        pp.push_back(spectral_norm(est.A_pp - th.A_pp));
        qq.push_back(spectral_norm(est.A_qq - th.A_qq));
        pq_main.push_back((est.A_pq - cand.main_text).norm());
        pq_app.push_back((est.A_pq - cand.appendix).norm());
        json p;
        p["probe"] = k;
        p["n_mc"] = est.n_mc;
        p["seed"] = est.seed;
        p["A_pp"] = matrix_json(est.A_pp);
        p["A_pq"] = matrix_json(est.A_pq);
        p["se_pp"] = metric_value(est.se_pp);
        p["se_pq"] = metric_value(est.se_pq);
        p["se_qp"] = metric_value(est.se_qp);
        p["se_qq"] = metric_value(est.se_qq);
        p["err_pp_spectral"] = metric_value(pp.back());
        p["err_qq_spectral"] = metric_value(qq.back());
        p["err_pq_main_text_frobenius"] = metric_value(pq_main.back());
        p["err_pq_appendix_frobenius"] = metric_value(pq_app.back());
        probes.push_back(p);
    }
    auto mean = [](const std::vector<double>& x) {
        double s = 0;
        for (double e : x) s += e;
        return s / static_cast<double>(x.size());
    };
    json report;
    report["d"] = v.d;
    report["r"] = v.r;
    report["n_mc"] = v.n_mc;
    report["seed"] = c.seed;
    report["probes"] = probes;
    const bool appendix = mean(pq_app) < mean(pq_main);
    report["a_pq_winner"] = appendix ? "appendix" : "main_text";
    out.text("verify.json", report.dump(2) + "\n");

    json m;
    m["n_mc"] = v.n_mc;
    m["probes"] = v.probes;
    m["mean_err_pp_spectral"] = metric_value(mean(pp));
    m["mean_err_qq_spectral"] = metric_value(mean(qq));
    m["mean_err_pq_main_text"] = metric_value(mean(pq_main));
    m["mean_err_pq_appendix"] = metric_value(mean(pq_app));
    m["a_pq_appendix_wins"] = appendix;
    const double lo = std::min(mean(pq_app), mean(pq_main)), hi = std::max(mean(pq_app), mean(pq_main));
    m["a_pq_error_ratio"] = metric_value(hi / lo);
    return m;
}

json run_downstream(const ExperimentConfig& c, Outputs& out) {
    const auto pc = c.pretrain.resolve(c.seed);
    const auto& ds = c.downstream;
    const auto res = pretrain(pc);
    const auto [g_def, gh_def] = default_downstream_scales(pc.r);
    auto emb_rng = make_rng(c.seed, Stream::embedding);
    const auto pair = build_embedding_pair(res.W0(), res.Wplus, pc.r, pc.eta, pc.nu_w, ds.m_hat,
                                           ds.gamma.value_or(g_def), ds.gamma_hat.value_or(gh_def), emb_rng,
                                           ds.rescale);
    out.stack("learned_stack", pair.learned);
    out.stack("purified_stack", pair.purified);

    std::vector<LabelTable> tables;
    if (ds.tables.empty()) tables = enumerate_universe(pc.r).tables;
    else
        for (const auto& t : ds.tables) tables.push_back(LabelTable::from_string(pc.r, t));

    auto eval_rng = make_rng(c.seed, Stream::head_eval);
    const Eigen::MatrixXd Ve =
        ds.n_eval > 0 ? sample_hypercube_inputs(pc.d, ds.n_eval, eval_rng) : evaluation_points(pc.d, eval_rng);
    const Eigen::MatrixXd Ge_learned = pair.learned.embed_all(Ve);
    const Eigen::MatrixXd Ge_purified = pair.purified.embed_all(Ve);

    struct Row {
        std::string table, variant;
        TrainedHead trained;
        double loss = 0, acc = 0, margin = 0;
        bool separable = false;
    };
    std::vector<Row> rows(tables.size() * 2);
    parallel_for(tables.size(), [&](std::size_t k) {
        auto train_rng = make_rng(c.seed, Stream::head_train, k);
        const auto Vt = sample_hypercube_inputs(pc.d, ds.n_train, train_rng);
        const auto yt = labels(tables[k], Vt);
        const auto ye = labels(tables[k], Ve);
        const EmbeddingStack* stacks[2] = {&pair.learned, &pair.purified};
        const Eigen::MatrixXd* evals[2] = {&Ge_learned, &Ge_purified};
        for (int s = 0; s < 2; ++s) {
            Row& row = rows[2 * k + static_cast<std::size_t>(s)];
            row.table = tables[k].to_string();
            row.variant = s == 0 ? "learned" : "purified";
            row.trained = train_head(stacks[s]->embed_all(Vt), yt, ds.lambda_hat, ds.n_iters);
            row.loss = eval_loss(*evals[s], row.trained.head, ye);
            row.acc = eval_accuracy(*evals[s], row.trained.head, ye);
            if (ds.margin) {
                const auto mr = margin_check(*evals[s], ye, ds.margin_iters);
                row.margin = mr.margin;
                row.separable = mr.separable;
            }
        }
    });

    std::string csv = std::string(downstream_csv_header) + "\n";
    json m;
    int perfect[2] = {0, 0}, separable[2] = {0, 0};
    double acc_sum[2] = {0, 0};
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        const int s = static_cast<int>(i % 2);
        perfect[s] += r.acc == 1.0;
        separable[s] += r.separable;
        acc_sum[s] += r.acc;
        csv += std::to_string(schema_version) + "," + r.table + "," + r.variant + "," +
               fmt(r.trained.report.final_objective) + "," + (r.trained.report.converged ? "1" : "0") + "," +
               fmt(r.loss) + "," + fmt(r.acc) + "," + (ds.margin ? fmt(r.margin) : "") + "," +
               (ds.margin ? (r.separable ? "1" : "0") : "") + "\n";
    }
    out.text("downstream.csv", csv);

    const double n_tables = static_cast<double>(tables.size());
    m["tables"] = static_cast<int>(tables.size());
    m["eval_points"] = static_cast<std::int64_t>(Ve.rows());
    m["learned_perfect_tables"] = perfect[0];
    m["purified_perfect_tables"] = perfect[1];
    m["learned_mean_accuracy"] = metric_value(acc_sum[0] / n_tables);
    m["purified_mean_accuracy"] = metric_value(acc_sum[1] / n_tables);
    if (ds.margin) {
        m["learned_separable_tables"] = separable[0];
        m["purified_separable_tables"] = separable[1];
    }
    const auto gap = embedding_gap(pair.learned, pair.purified, Ve);
    m["gap_median"] = metric_value(gap.median);
    m["gap_max"] = metric_value(gap.max);
    m["learned_scale"] = metric_value(pair.learned.scale);
    m["purified_scale"] = metric_value(pair.purified.scale);
    return m;
}

json run_baseline(const ExperimentConfig& c, Outputs& out) {
    const auto rec = separation_experiment(c.separation());
    std::string csv = std::string(baseline_csv_header) + "\n";
    for (const auto& r : rec.rows)
        csv += std::to_string(schema_version) + "," + std::to_string(r.seed) + "," + support_string(r.support) + "," +
               r.embedding + "," + fmt(r.eval_loss) + "," + fmt(r.eval_accuracy) + "," + fmt(r.train_objective) +
               "\n";
    out.text("baseline.csv", csv);

    json m;
    for (const auto& s : rec.seeds) {
        const std::string k = "[seed=" + std::to_string(s.seed) + "]";
        m["learned_worst" + k] = metric_value(s.learned_worst);
        m["learned_mean" + k] = metric_value(s.learned_mean);
        m["random_worst" + k] = metric_value(s.random_worst);
        m["random_mean" + k] = metric_value(s.random_mean);
    }
    m["median_learned_worst"] = metric_value(rec.median_learned_worst);
    m["median_random_worst"] = metric_value(rec.median_random_worst);
    m["median_worst_gap"] = metric_value(rec.median_gap);
    return m;
}

json run_sweep(const ExperimentConfig& c, Outputs& out) {
    struct Point {
        int T, d, m;
        std::uint64_t seed;
        RecoveryMetrics rec;
        double gap = 0;
    };
    std::vector<Point> points;
    for (int T : c.sweep.T)
        for (int d : c.sweep.d)
            for (int m : c.sweep.m)
                for (auto s : c.sweep.seeds) points.push_back({T, d, m, s, {}, 0});

    const auto& ds = c.downstream;
    parallel_for(points.size(), [&](std::size_t i) {
        auto& p = points[i];
        const auto pc = c.pretrain.resolve(p.d, c.pretrain.r, p.m, p.T, p.seed);
        const auto res = pretrain(pc);
        p.rec = recovery_metrics(res.W0(), res.Wplus, pc.r, pc.eta, pc.nu_w);
        const auto [g_def, gh_def] = default_downstream_scales(pc.r);
        auto emb_rng = make_rng(p.seed, Stream::embedding);
        const auto pair = build_embedding_pair(res.W0(), res.Wplus, pc.r, pc.eta, pc.nu_w, ds.m_hat,
                                               ds.gamma.value_or(g_def), ds.gamma_hat.value_or(gh_def), emb_rng,
                                               ds.rescale);
        auto eval_rng = make_rng(p.seed, Stream::head_eval);
        p.gap = embedding_gap(pair.learned, pair.purified, evaluation_points(pc.d, eval_rng)).median;
    });

    std::string csv = std::string(sweep_csv_header) + "\n";
    std::map<std::string, std::vector<double>> ratio, gap;
    std::vector<std::string> order;
    for (const auto& p : points) {
        csv += std::to_string(schema_version) + "," + std::to_string(p.T) + "," + std::to_string(p.d) + "," +
               std::to_string(p.m) + "," + std::to_string(p.seed) + "," + fmt(p.rec.thm1_ratio) + "," +
               fmt(p.rec.prop1_parallel_residual) + "," + fmt(p.rec.prop1_perp_norm) + "," +
               fmt(p.rec.median_coefficient_residual) + "," + fmt(p.rec.median_perp_suppression) + "," +
               fmt(p.gap) + "\n";
        const std::string key =
            "[T=" + std::to_string(p.T) + ",d=" + std::to_string(p.d) + ",m=" + std::to_string(p.m) + "]";
        if (!ratio.count(key)) order.push_back(key);
        ratio[key].push_back(p.rec.thm1_ratio);
        gap[key].push_back(p.gap);
    }
    out.text("sweep.csv", csv);

    json m;
    m["points"] = static_cast<std::int64_t>(points.size());
    for (const auto& key : order) {
        m["median_thm1_ratio" + key] = metric_value(median(ratio[key]));
        m["median_gap" + key] = metric_value(median(gap[key]));
    }
    return m;
}

}  // namespace

json metric_value(double v) {
    if (std::isfinite(v)) return v;
    if (std::isnan(v)) return "nan";
    return v > 0 ? "inf" : "-inf";
}

RunResult run_experiment(const ExperimentConfig& config) {
    const auto start = std::chrono::steady_clock::now();
    fs::create_directories(config.output_dir);
    Outputs out(config.output_dir);

    json metrics;
    switch (config.mode) {
        case Mode::pretrain: metrics = run_pretrain(config, out); break;
        case Mode::verify: metrics = run_verify(config, out); break;
        case Mode::downstream: metrics = run_downstream(config, out); break;
        case Mode::baseline: metrics = run_baseline(config, out); break;
        case Mode::sweep: metrics = run_sweep(config, out); break;
    }

    json record;
    record["schema_version"] = schema_version;
    record["mode"] = to_string(config.mode);
    record["config_hash"] = config.hash();
    record["seed"] = config.seed;
    record["config"] = config.canonical();
    record["metrics"] = metrics;
    record["timestamp"] = {
        {"utc", utc_now()},
        {"wall_seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()}};
    if (const auto issue = validate_metrics(record); !issue.ok())
        throw std::runtime_error("emitted metrics record failed validation: " + issue.violations.front());
    out.text("metrics.json", record.dump(2) + "\n");
    return {record, out.take()};
}

}  // namespace mtfl
