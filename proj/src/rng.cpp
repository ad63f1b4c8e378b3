#include "mtfl/rng.hpp"

#include <boost/random/normal_distribution.hpp>

namespace mtfl {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, Stream stream, std::uint64_t index) {
    std::uint64_t h = splitmix64(base);
    h = splitmix64(h ^ static_cast<std::uint64_t>(stream));
    return splitmix64(h ^ index);
}

Rng make_rng(std::uint64_t base, Stream stream, std::uint64_t index) {
    return Rng(derive_seed(base, stream, index));
}

double standard_normal(Rng& rng) {
    // Ziggurat; stateless between calls, so a fresh object per draw is fine.
    boost::random::normal_distribution<double> dist;
    return dist(rng);
}

double uniform(Rng& rng, double lo, double hi) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    return lo + (hi - lo) * u;
}

int rademacher(Rng& rng) { return (rng() >> 63) ? 1 : -1; }

void fill_normal(Eigen::Ref<Eigen::MatrixXd> out, Rng& rng, double stddev) {
    boost::random::normal_distribution<double> dist(0.0, stddev);
    for (Eigen::Index i = 0; i < out.rows(); ++i)
        for (Eigen::Index j = 0; j < out.cols(); ++j) out(i, j) = dist(rng);
}

}  // namespace mtfl
