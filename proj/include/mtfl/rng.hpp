#pragma once
#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace mtfl {

using Rng = std::mt19937_64;

// Stream tags keep independent consumers of one master seed apart.
enum class Stream : std::uint64_t {
    init = 1,
    tasks,
    head_batch,
    rep_batch,
    monte_carlo,
    contrastive,
    embedding,
    head_train,
    head_eval,
    random_features,
    supports,
    sweep,
    probes,
};

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t base, Stream stream, std::uint64_t index = 0);
Rng make_rng(std::uint64_t base, Stream stream, std::uint64_t index = 0);

double standard_normal(Rng& rng);
// Uniform on [lo, hi).
double uniform(Rng& rng, double lo, double hi);
// Fair ±1.
int rademacher(Rng& rng);

// Row-major fill so the draw order is independent of Eigen's storage order.
void fill_normal(Eigen::Ref<Eigen::MatrixXd> out, Rng& rng, double stddev = 1.0);

}  // namespace mtfl
