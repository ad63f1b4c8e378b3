#include "mtfl/pretrain.hpp"

#include <chrono>
#include <cmath>
#include <iostream>
#include <numbers>

#include "mtfl/errors.hpp"
#include "mtfl/parallel.hpp"

namespace mtfl {

double default_lambda_w(int r, double eta) {
    return (1.0 + eta * eta * std::ldexp(1.0, -r - 1) / std::numbers::pi) / eta;
}

Hyperparams default_hyperparams(int r, int d) {
    if (r < 1 || d < r) throw invalid_argument("default_hyperparams: need 1 <= r <= d");
    Hyperparams h;
    h.eta = 1.0;
    h.lambda_a = 1.0 / h.eta;
    h.lambda_w = default_lambda_w(r, h.eta);
    h.nu_w = std::pow(static_cast<double>(d), -1.25);
    return h;
}

PretrainConfig PretrainConfig::with_defaults(int d, int r, int m, int T, int n_per_task, std::uint64_t seed) {
    const auto h = default_hyperparams(r, d);
    PretrainConfig c;
    c.d = d;
    c.r = r;
    c.m = m;
    c.T = T;
    c.eta = h.eta;
    c.lambda_a = h.lambda_a;
    c.lambda_w = h.lambda_w;
    c.nu_w = h.nu_w;
    c.nu_a = 1.0 / std::sqrt(static_cast<double>(m));
    c.n_per_task = n_per_task;
    c.seed = seed;
    return c;
}

std::vector<std::string> PretrainConfig::violations() const {
    std::vector<std::string> v;
    if (d < 1) v.emplace_back("d must be >= 1");
    if (r < 1) v.emplace_back("r must be >= 1");
    if (r > max_table_r) v.emplace_back("r must be <= 20");
    if (d < r) v.emplace_back("d must be >= r");
    if (m < 2 || m % 2 != 0) v.emplace_back("m must be even");
    if (T < 1) v.emplace_back("T must be >= 1");
    if (!(eta > 0.0)) v.emplace_back("eta must be > 0");
    if (!(nu_w >= 0.0)) v.emplace_back("nu_w must be >= 0");
    if (!(nu_a >= 0.0)) v.emplace_back("nu_a must be >= 0");
    if (!std::isfinite(lambda_a)) v.emplace_back("lambda_a must be finite");
    if (!std::isfinite(lambda_w)) v.emplace_back("lambda_w must be finite");
    if (n_per_task < 1) v.emplace_back("n_per_task must be >= 1");
    if (tasks == TaskSource::full_universe) {
        if (r > 4) v.emplace_back("the full task universe needs r <= 4");
        else if (static_cast<std::size_t>(T) != (std::size_t{1} << (std::size_t{1} << r)))
            v.emplace_back("T must equal 2^(2^r) for the full task universe");
    }
    return v;
}

NetParams PretrainResult::trained() const {
    NetParams p = init;
    p.W = Wplus;
    p.heads = heads_plus;
    return p;
}

Eigen::VectorXd head_step_closed_form(const NetParams& p, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                      double eta) {
    if (!is_symmetric(p)) throw contract_violation("head_step: closed form needs symmetric initial parameters");
    if (X.rows() == 0) throw invalid_argument("head_step: empty batch");
    return eta * (hidden(p, X).transpose() * y) / static_cast<double>(X.rows());
}

Eigen::VectorXd head_step(const NetParams& p, int task_index, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                          double eta, double lambda_a) {
    const Eigen::VectorXd a0 = p.heads.row(task_index).transpose();
    Eigen::VectorXd a = (1.0 - eta * lambda_a) * a0 - eta * grad_head(p, task_index, X, y);
    if (eta * lambda_a == 1.0 && is_symmetric(p)) {
        const Eigen::VectorXd closed = head_step_closed_form(p, X, y, eta);
        const double scale = std::max(1.0, closed.lpNorm<Eigen::Infinity>());
        if ((a - closed).lpNorm<Eigen::Infinity>() > 1e-12 * scale)
            throw contract_violation("head_step: gradient step disagrees with closed form");
    }
    return a;
}

Eigen::MatrixXd representation_step(const NetParams& p, const Eigen::MatrixXd& heads_plus, int T,
                                    const BatchSource& source, double eta, double lambda_w) {
    if (T != heads_plus.rows()) throw invalid_argument("representation_step: batch/task count mismatch");
    return (1.0 - eta * lambda_w) * p.W - eta * grad_weights(p, heads_plus, T, source);
}

Eigen::MatrixXd representation_step(const NetParams& p, const Eigen::MatrixXd& heads_plus,
                                    std::span<const TaskBatch> batches, double eta, double lambda_w) {
    if (static_cast<Eigen::Index>(batches.size()) != heads_plus.rows())
        throw invalid_argument("representation_step: batch/task count mismatch");
    return (1.0 - eta * lambda_w) * p.W - eta * grad_weights(p, heads_plus, batches);
}

TaskBatch task_batch(const PretrainConfig& config, const LabelTable& table, Stream stream, int task) {
    auto rng = make_rng(config.seed, stream, static_cast<std::uint64_t>(task));
    TaskBatch batch;
    batch.X = sample_gaussian_inputs(config.d, config.n_per_task, rng);
    batch.y = labels(table, batch.X);
    return batch;
}

PretrainResult pretrain(const PretrainConfig& config) {
    if (const auto v = config.violations(); !v.empty()) throw invalid_argument("pretrain: " + v.front());
    if (config.m > config.d)
        std::cerr << "warning: m = " << config.m << " exceeds d = " << config.d << "\n";
    const auto start = std::chrono::steady_clock::now();

    PretrainResult out;
    out.config = config;
    out.seed = config.seed;
    if (config.tasks == TaskSource::full_universe) {
        out.tasks = enumerate_universe(config.r);
    } else {
        auto rng = make_rng(config.seed, Stream::tasks);
        out.tasks = sample_tasks(config.r, config.T, rng);
        out.tasks.seed = config.seed;
    }

    auto init_rng = make_rng(config.seed, Stream::init);
    out.init = symmetric_init(config.d, config.r, config.m, config.T, config.nu_w, config.nu_a, init_rng);

    out.heads_plus.resize(config.T, config.m);
    parallel_for(static_cast<std::size_t>(config.T), [&](std::size_t i) {
        const int t = static_cast<int>(i);
        const auto batch = task_batch(config, out.tasks.tables[i], Stream::head_batch, t);
        out.heads_plus.row(t) = head_step(out.init, t, batch.X, batch.y, config.eta, config.lambda_a).transpose();
    });

    out.Wplus = representation_step(
        out.init, out.heads_plus, config.T,
        [&](int t) { return task_batch(config, out.tasks.tables[static_cast<std::size_t>(t)], Stream::rep_batch, t); },
        config.eta, config.lambda_w);

    out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

}  // namespace mtfl
